#ifndef DRIFTWATCH_GRAPH_HPP
#define DRIFTWATCH_GRAPH_HPP

#include <string>
#include <utility>
#include <vector>

#include "driftwatch/common.hpp"
#include "driftwatch/rng.hpp"

namespace dw {

// Undirected graph over the latent coordinates of the Gaussian model.
// Stored as a dense symmetric adjacency; the graphs here are small (tens of
// vertices) and mutate one edge at a time.
class Graph {
public:
    Graph() : n_(0) {}
    explicit Graph(int n) : n_(n), adj_(static_cast<size_t>(n) * n, 0) {}

    static Graph complete(int n) {
        Graph g(n);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) g.set_edge(i, j, true);
        return g;
    }

    int size() const { return n_; }

    bool edge(int i, int j) const { return adj_[static_cast<size_t>(i) * n_ + j] != 0; }

    void set_edge(int i, int j, bool on) {
        if (i == j) throw error("Graph: self loops are not representable");
        adj_[static_cast<size_t>(i) * n_ + j] = on ? 1 : 0;
        adj_[static_cast<size_t>(j) * n_ + i] = on ? 1 : 0;
    }

    void flip_edge(int i, int j) { set_edge(i, j, !edge(i, j)); }

    int edge_count() const {
        int c = 0;
        for (int i = 0; i < n_; ++i)
            for (int j = i + 1; j < n_; ++j) c += edge(i, j);
        return c;
    }

    int max_edges() const { return n_ * (n_ - 1) / 2; }

    bool is_complete() const { return edge_count() == max_edges(); }
    bool is_empty() const { return edge_count() == 0; }

    std::vector<int> neighbors(int i) const {
        std::vector<int> out;
        for (int j = 0; j < n_; ++j)
            if (j != i && edge(i, j)) out.push_back(j);
        return out;
    }

    // count of neighbors after/before i in the vertex order (free-element bookkeeping)
    int later_neighbors(int i) const {
        int c = 0;
        for (int j = i + 1; j < n_; ++j) c += edge(i, j);
        return c;
    }
    int earlier_neighbors(int i) const {
        int c = 0;
        for (int j = 0; j < i; ++j) c += edge(i, j);
        return c;
    }

    std::vector<std::pair<int, int>> edges() const {
        std::vector<std::pair<int, int>> out;
        for (int i = 0; i < n_; ++i)
            for (int j = i + 1; j < n_; ++j)
                if (edge(i, j)) out.emplace_back(i, j);
        return out;
    }

    // compact string key for caching per-graph quantities
    std::string key() const;

    bool operator==(const Graph& o) const { return n_ == o.n_ && adj_ == o.adj_; }

private:
    int n_;
    std::vector<std::uint8_t> adj_;
};

// chordality test via maximum cardinality search (Tarjan–Yannakakis)
bool is_chordal(const Graph& g);

// maximal cliques (Bron–Kerbosch with pivoting)
std::vector<std::vector<int>> maximal_cliques(const Graph& g);

// clique/separator decomposition of a chordal graph: cliques ordered to
// satisfy the running intersection property, separators with multiplicity.
struct CliqueDecomposition {
    std::vector<std::vector<int>> cliques;
    std::vector<std::vector<int>> separators;
};
CliqueDecomposition clique_decomposition(const Graph& g);

// uniform proposal over the J(J-1)/2 vertex pairs
std::pair<int, int> propose_edge(Rng& rng, int n);

// log prior P(G) = rho^{|E|} (1-rho)^{max_edges - |E|}
double graph_log_prior(const Graph& g, double rho);

}  // namespace dw

#endif
