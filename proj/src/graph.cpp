#include "driftwatch/graph.hpp"

#include <algorithm>
#include <numeric>

namespace dw {

std::string Graph::key() const {
    // pack the upper triangle into hex nibbles
    std::string out;
    out.reserve(static_cast<size_t>(max_edges()) / 4 + 2);
    int acc = 0, bits = 0;
    for (int i = 0; i < n_; ++i)
        for (int j = i + 1; j < n_; ++j) {
            acc = (acc << 1) | (edge(i, j) ? 1 : 0);
            if (++bits == 4) {
                out.push_back("0123456789abcdef"[acc]);
                acc = 0;
                bits = 0;
            }
        }
    if (bits > 0) out.push_back("0123456789abcdef"[acc << (4 - bits)]);
    return out;
}

// maximum cardinality search; returns visit order (first visited first)
static std::vector<int> mcs_order(const Graph& g) {
    const int n = g.size();
    std::vector<int> weight(n, 0), order;
    std::vector<bool> visited(n, false);
    order.reserve(n);
    for (int step = 0; step < n; ++step) {
        int best = -1;
        for (int v = 0; v < n; ++v)
            if (!visited[v] && (best == -1 || weight[v] > weight[best])) best = v;
        visited[best] = true;
        order.push_back(best);
        for (int u = 0; u < n; ++u)
            if (!visited[u] && g.edge(best, u)) ++weight[u];
    }
    return order;
}

bool is_chordal(const Graph& g) {
    const int n = g.size();
    if (n <= 2) return true;
    std::vector<int> order = mcs_order(g);
    std::vector<int> rank(n);
    for (int i = 0; i < n; ++i) rank[order[i]] = i;
    // every vertex's earlier-visited neighborhood must be a clique
    for (int i = 1; i < n; ++i) {
        int v = order[i];
        std::vector<int> earlier;
        for (int u : g.neighbors(v))
            if (rank[u] < i) earlier.push_back(u);
        for (size_t a = 0; a < earlier.size(); ++a)
            for (size_t b = a + 1; b < earlier.size(); ++b)
                if (!g.edge(earlier[a], earlier[b])) return false;
    }
    return true;
}

static void bron_kerbosch(const Graph& g, std::vector<int>& R, std::vector<int> P,
                          std::vector<int> X, std::vector<std::vector<int>>& out) {
    if (P.empty() && X.empty()) {
        out.push_back(R);
        return;
    }
    // pivot on the vertex with most neighbors in P
    int pivot = -1, best = -1;
    for (int u : P) {
        int c = 0;
        for (int w : P) c += g.edge(u, w) ? 1 : 0;
        if (c > best) { best = c; pivot = u; }
    }
    for (int u : X) {
        int c = 0;
        for (int w : P) c += g.edge(u, w) ? 1 : 0;
        if (c > best) { best = c; pivot = u; }
    }
    std::vector<int> candidates;
    for (int v : P)
        if (pivot == -1 || !g.edge(pivot, v)) candidates.push_back(v);
    for (int v : candidates) {
        std::vector<int> P2, X2;
        for (int w : P)
            if (g.edge(v, w)) P2.push_back(w);
        for (int w : X)
            if (g.edge(v, w)) X2.push_back(w);
        R.push_back(v);
        bron_kerbosch(g, R, std::move(P2), std::move(X2), out);
        R.pop_back();
        P.erase(std::find(P.begin(), P.end(), v));
        X.push_back(v);
    }
}

std::vector<std::vector<int>> maximal_cliques(const Graph& g) {
    std::vector<std::vector<int>> out;
    std::vector<int> R, P(g.size()), X;
    std::iota(P.begin(), P.end(), 0);
    bron_kerbosch(g, R, P, X, out);
    for (auto& c : out) std::sort(c.begin(), c.end());
    return out;
}

CliqueDecomposition clique_decomposition(const Graph& g) {
    if (!is_chordal(g)) throw error("clique_decomposition: graph is not chordal");
    CliqueDecomposition d;
    d.cliques = maximal_cliques(g);
    if (d.cliques.size() <= 1) return d;
    // order cliques by the MCS rank of their last-visited vertex; this ordering
    // satisfies the running intersection property on chordal graphs
    std::vector<int> order = mcs_order(g);
    std::vector<int> rank(g.size());
    for (int i = 0; i < g.size(); ++i) rank[order[i]] = i;
    std::sort(d.cliques.begin(), d.cliques.end(),
              [&](const std::vector<int>& a, const std::vector<int>& b) {
                  int ra = 0, rb = 0;
                  for (int v : a) ra = std::max(ra, rank[v]);
                  for (int v : b) rb = std::max(rb, rank[v]);
                  return ra < rb;
              });
    std::vector<bool> seen(g.size(), false);
    for (int v : d.cliques[0]) seen[v] = true;
    for (size_t k = 1; k < d.cliques.size(); ++k) {
        std::vector<int> sep;
        for (int v : d.cliques[k])
            if (seen[v]) sep.push_back(v);
        if (!sep.empty()) d.separators.push_back(sep);
        for (int v : d.cliques[k]) seen[v] = true;
    }
    return d;
}

std::pair<int, int> propose_edge(Rng& rng, int n) {
    int m = n * (n - 1) / 2;
    int k = rng.uniform_int(m);
    // unrank the pair (i < j) from the upper-triangle index
    for (int i = 0; i < n - 1; ++i) {
        int row = n - 1 - i;
        if (k < row) return {i, i + 1 + k};
        k -= row;
    }
    throw error("propose_edge: unreachable");
}

double graph_log_prior(const Graph& g, double rho) {
    if (rho <= 0.0 || rho >= 1.0) throw error("graph_log_prior: rho must be in (0,1)");
    int e = g.edge_count();
    return e * std::log(rho) + (g.max_edges() - e) * std::log1p(-rho);
}

}  // namespace dw
