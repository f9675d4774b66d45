#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include "driftwatch/gwishart.hpp"

using namespace dw;

static Graph random_graph(Rng& rng, int n, double p_edge) {
    Graph g(n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (rng.uniform() < p_edge) g.set_edge(i, j, true);
    return g;
}

static Graph chain_graph(int n) {
    Graph g(n);
    for (int i = 0; i + 1 < n; ++i) g.set_edge(i, i + 1, true);
    return g;
}

TEST_CASE("graph basics, key, prior") {
    Graph g(4);
    g.set_edge(0, 1, true);
    g.set_edge(2, 3, true);
    CHECK(g.edge_count() == 2);
    CHECK(g.max_edges() == 6);
    CHECK(g.neighbors(0) == std::vector<int>{1});
    CHECK(g.later_neighbors(0) == 1);
    CHECK(g.earlier_neighbors(3) == 1);
    CHECK(g.key() != Graph(4).key());
    // log prior: 2 edges at rho=0.2 -> 2 log 0.2 + 4 log 0.8
    CHECK(graph_log_prior(g, 0.2) ==
          doctest::Approx(2 * std::log(0.2) + 4 * std::log(0.8)).epsilon(1e-12));
}

TEST_CASE("chordality on known graphs") {
    CHECK(is_chordal(Graph::complete(5)));
    CHECK(is_chordal(Graph(4)));
    CHECK(is_chordal(chain_graph(6)));
    Graph c4(4);  // four-cycle: the canonical non-chordal graph
    c4.set_edge(0, 1, true);
    c4.set_edge(1, 2, true);
    c4.set_edge(2, 3, true);
    c4.set_edge(3, 0, true);
    CHECK(!is_chordal(c4));
    c4.set_edge(0, 2, true);  // adding a chord fixes it
    CHECK(is_chordal(c4));
}

TEST_CASE("clique decomposition of a chain") {
    CliqueDecomposition d = clique_decomposition(chain_graph(3));
    REQUIRE(d.cliques.size() == 2);
    REQUIRE(d.separators.size() == 1);
    CHECK(d.separators[0] == std::vector<int>{1});
}

TEST_CASE("edge proposal is uniform over pairs (chi-square test)") {
    Rng rng(31);
    const int n = 5, m = 10, trials = 10000;
    std::vector<int> counts(m, 0);
    for (int s = 0; s < trials; ++s) {
        auto [i, j] = propose_edge(rng, n);
        REQUIRE(i < j);
        int idx = 0;
        for (int a = 0, k = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b, ++k)
                if (a == i && b == j) idx = k;
        counts[idx]++;
    }
    double stat = 0.0, expect = trials / static_cast<double>(m);
    for (int c : counts) stat += sq(c - expect) / expect;
    boost::math::chi_squared chi2(m - 1);
    CHECK(stat < boost::math::quantile(chi2, 0.99));  // p > 0.01
}

TEST_CASE("cholesky completion zeroes every non-edge and stays positive definite") {
    Rng rng(7);
    for (int rep = 0; rep < 200; ++rep) {
        int n = 2 + rng.uniform_int(7);
        Graph g = random_graph(rng, n, rng.uniform(0.1, 0.9));
        MatrixXd psi = MatrixXd::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            psi(i, i) = 0.3 + std::abs(rng.normal());
            for (int j = i + 1; j < n; ++j)
                if (g.edge(i, j)) psi(i, j) = rng.normal();
        }
        MatrixXd full = complete_cholesky(psi, g);
        MatrixXd lam = full.transpose() * full;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (!g.edge(i, j)) CHECK(std::abs(lam(i, j)) < 1e-10);
        CHECK(Eigen::LLT<MatrixXd>(lam).info() == Eigen::Success);
        // free entries of the factor are preserved
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j)
                if (i == j || g.edge(i, j)) CHECK(full(i, j) == psi(i, j));
    }
}

TEST_CASE("full-graph sampler mean matches the Wishart closed form") {
    Rng rng(101);
    const int j = 2, n = 20000;
    const double nu = 3.0;
    MatrixXd d = MatrixXd::Identity(j, j);
    MatrixXd mean = MatrixXd::Zero(j, j);
    for (int s = 0; s < n; ++s) mean += sample_gwishart(rng, Graph::complete(j), nu, d);
    mean /= n;
    // E = (nu + J - 1) D^{-1} = 4 I; Var(L_11) = 2*4 = 8, Var(L_12) = 4
    CHECK(std::abs(mean(0, 0) - 4.0) < 4.0 * std::sqrt(8.0 / n));
    CHECK(std::abs(mean(1, 1) - 4.0) < 4.0 * std::sqrt(8.0 / n));
    CHECK(std::abs(mean(0, 1)) < 4.0 * std::sqrt(4.0 / n));
}

TEST_CASE("empty-graph sampler marginals match univariate gamma moments") {
    Rng rng(202);
    const int n = 20000;
    const double nu = 3.0;
    MatrixXd d = VectorXd::LinSpaced(3, 1.0, 2.0).asDiagonal();
    d(2, 2) = 0.5;
    VectorXd m = VectorXd::Zero(3), v = VectorXd::Zero(3);
    for (int s = 0; s < n; ++s) {
        MatrixXd lam = sample_gwishart(rng, Graph(3), nu, d);
        for (int a = 0; a < 3; ++a)
            for (int b = a + 1; b < 3; ++b) CHECK(lam(a, b) == 0.0);
        m += lam.diagonal();
        v += lam.diagonal().cwiseAbs2();
    }
    m /= n;
    v = v / n - m.cwiseAbs2();
    for (int a = 0; a < 3; ++a) {
        double em = nu / d(a, a), ev = 2.0 * nu / sq(d(a, a));
        CHECK(std::abs(m(a) - em) < 4.0 * std::sqrt(ev / n));
        CHECK(std::abs(v(a) - ev) / ev < 0.1);
    }
}

TEST_CASE("chain-graph draws carry the exact zero pattern") {
    Rng rng(303);
    Graph g = chain_graph(4);
    MatrixXd d = MatrixXd::Identity(4, 4);
    for (int s = 0; s < 200; ++s) {
        MatrixXd lam = sample_gwishart(rng, g, 3.0, d);
        CHECK(Eigen::LLT<MatrixXd>(lam).info() == Eigen::Success);
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j)
                if (!g.edge(i, j)) CHECK(std::abs(lam(i, j)) < 1e-12);
    }
}

TEST_CASE("covariance selection pins free entries and zeroes the inverse off-graph") {
    Rng rng(404);
    Graph g = chain_graph(5);
    MatrixXd a(5, 5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) a(i, j) = rng.normal();
    MatrixXd target = a * a.transpose() + 5.0 * MatrixXd::Identity(5, 5);
    MatrixXd w = ips_covariance_select(g, target);
    for (int i = 0; i < 5; ++i) {
        CHECK(w(i, i) == doctest::Approx(target(i, i)).epsilon(1e-8));
        for (int j = i + 1; j < 5; ++j)
            if (g.edge(i, j)) CHECK(w(i, j) == doctest::Approx(target(i, j)).epsilon(1e-8));
    }
    MatrixXd k = w.llt().solve(MatrixXd::Identity(5, 5));
    for (int i = 0; i < 5; ++i)
        for (int j = i + 1; j < 5; ++j)
            if (!g.edge(i, j)) CHECK(std::abs(k(i, j)) < 1e-7);
}

// ---- normalizing constants: closed forms vs estimators ----

TEST_CASE("MC estimator equals the closed form exactly on complete and empty graphs") {
    Rng rng(505);
    MatrixXd d(3, 3);
    d << 2.0, 0.3, 0.1, 0.3, 1.5, 0.2, 0.1, 0.2, 1.0;
    double closed = log_norm_const_full(3, 4.0, d);
    NormConstResult mc = log_norm_const_mc(Graph::complete(3), 4.0, d, 10, rng);
    CHECK(mc.value == doctest::Approx(closed).epsilon(1e-10));
    CHECK(mc.se == 0.0);

    // empty graph with diagonal D: the correction term vanishes sample-by-sample
    MatrixXd ddiag = VectorXd::LinSpaced(3, 0.5, 2.5).asDiagonal();
    double closed_empty = 0.0;
    for (int i = 0; i < 3; ++i)
        closed_empty += std::lgamma(2.0) + 2.0 * (std::log(2.0) - std::log(ddiag(i, i)));
    NormConstResult mce = log_norm_const_mc(Graph(3), 4.0, ddiag, 50, rng);
    CHECK(mce.value == doctest::Approx(closed_empty).epsilon(1e-10));
    CHECK(log_norm_const_decomposable(Graph(3), 4.0, ddiag) ==
          doctest::Approx(closed_empty).epsilon(1e-10));
}

TEST_CASE("MC, Laplace and decomposable routes agree on a chain graph") {
    Rng rng(606);
    Graph g = chain_graph(3);
    MatrixXd d(3, 3);
    d << 1.0, 0.4, 0.0, 0.4, 1.2, 0.3, 0.0, 0.3, 0.9;

    // prior-strength dof: MC against the exact decomposable value
    double exact3 = log_norm_const_decomposable(g, 3.0, d);
    NormConstResult mc = log_norm_const_mc(g, 3.0, d, 50000, rng);
    CHECK(std::abs(mc.value - exact3) < 4.0 * mc.se + 1e-6);

    // posterior-strength dof: Laplace against the exact decomposable value
    double exact30 = log_norm_const_decomposable(g, 30.0, d);
    double lap30 = log_norm_const_laplace(g, 30.0, d);
    CHECK(std::abs(lap30 - exact30) < 0.02 * std::abs(exact30));
}

TEST_CASE("Laplace within 2 percent of the complete-graph closed form at nu=50") {
    MatrixXd d(3, 3);
    d << 1.0, 0.2, 0.1, 0.2, 1.5, 0.3, 0.1, 0.3, 0.8;
    double exact = log_norm_const_full(3, 50.0, d);
    double lap = log_norm_const_laplace(Graph::complete(3), 50.0, d);
    CHECK(std::abs(lap - exact) < 0.02 * std::abs(exact));
}

TEST_CASE("Laplace on the empty graph equals the sum of univariate Laplace values") {
    const double nu = 12.0;
    MatrixXd d = VectorXd::LinSpaced(3, 0.8, 2.2).asDiagonal();
    double expect = 0.0;
    for (int i = 0; i < 3; ++i) {
        double dd = d(i, i);
        double khat = (nu - 2.0) / dd;
        double lmode = 0.5 * (nu - 2.0) * std::log(khat) - 0.5 * dd * khat;
        double hess = dd * dd / (2.0 * (nu - 2.0));
        expect += lmode + 0.5 * std::log(2.0 * M_PI) - 0.5 * std::log(hess);
    }
    CHECK(log_norm_const_laplace(Graph(3), nu, d) ==
          doctest::Approx(expect).epsilon(1e-3));
}

TEST_CASE("MC agrees with decomposable on random chordal graphs with random scale") {
    Rng rng(808);
    int tested = 0;
    while (tested < 3) {
        Graph g = random_graph(rng, 4, 0.5);
        if (!is_chordal(g) || g.is_complete()) continue;
        MatrixXd a(4, 4);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) a(i, j) = rng.normal();
        MatrixXd d = a * a.transpose() + 4.0 * MatrixXd::Identity(4, 4);
        double exact = log_norm_const_decomposable(g, 3.5, d);
        NormConstResult mc = log_norm_const_mc(g, 3.5, d, 50000, rng);
        CHECK(std::abs(mc.value - exact) < 4.0 * mc.se + 1e-6);
        ++tested;
    }
}

TEST_CASE("router picks closed forms first and counts estimator calls") {
    MatrixXd d = MatrixXd::Identity(4, 4);
    NormConstRouter router(3.0, d, 2000, 99);

    // complete graph: closed form, no estimator calls
    router.prior_log_const(Graph::complete(4));
    router.posterior_log_const(Graph::complete(4), 53.0, 2.0 * d);
    CHECK(router.counters().mc_calls == 0);
    CHECK(router.counters().laplace_calls == 0);

    // chordal: decomposable closed form, still no estimator calls
    router.prior_log_const(chain_graph(4));
    router.posterior_log_const(chain_graph(4), 53.0, 2.0 * d);
    CHECK(router.counters().mc_calls == 0);
    CHECK(router.counters().laplace_calls == 0);

    // non-chordal four-cycle: MC once (then cached), Laplace per posterior call
    Graph c4(4);
    c4.set_edge(0, 1, true);
    c4.set_edge(1, 2, true);
    c4.set_edge(2, 3, true);
    c4.set_edge(3, 0, true);
    router.prior_log_const(c4);
    router.prior_log_const(c4);
    CHECK(router.counters().mc_calls == 1);
    router.posterior_log_const(c4, 53.0, 2.0 * d);
    router.posterior_log_const(c4, 53.0, 2.0 * d);
    CHECK(router.counters().laplace_calls == 2);
}

TEST_CASE("unnormalized density pinned value") {
    MatrixXd lam = MatrixXd::Identity(2, 2);
    MatrixXd d = MatrixXd::Identity(2, 2);
    CHECK(log_gwishart_unnorm(lam, 3.0, d) == doctest::Approx(-1.0).epsilon(1e-12));
}
