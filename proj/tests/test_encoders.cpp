#include <doctest.h>

#include <numeric>

#include "equation_checks.hpp"
#include "mmf3/encoders.hpp"
#include "mmf3/errors.hpp"
#include "mmf3/fusion.hpp"

using namespace mmf3;
using checks::random_matrix;

namespace {

nc::Matrix permute_rows(const nc::Matrix& m, const std::vector<Eigen::Index>& perm) {
    nc::Matrix out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(perm[static_cast<std::size_t>(i)]);
    return out;
}

} // namespace

TEST_CASE("gcn matches the dense oracle") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) CHECK(checks::gcn_error(seed) < 1e-10);
}

TEST_CASE("gcn with identity weights") {
    nc::ParamStore store;
    Rng rng(4);
    const auto stack = GcnStack::create(store, "g", 3, 1, rng);
    stack.weights[0].mutable_value() = nc::Matrix::Identity(3, 3);
    const auto h = random_matrix(rng, 1, 3);
    const nc::Matrix s = nc::Matrix::Identity(1, 1);
    CHECK(gcn_forward(nc::constant(h), s, stack).value() == h.cwiseMax(0.0));

    // Two connected nodes: S has every entry 1/2, so both rows become the clamped mean.
    const auto h2 = random_matrix(rng, 2, 3);
    const nc::Matrix s2 = nc::Matrix::Constant(2, 2, 0.5);
    const auto out = gcn_forward(nc::constant(h2), s2, stack).value();
    const nc::Matrix mean = (0.5 * (h2.row(0) + h2.row(1))).cwiseMax(0.0);
    CHECK((out.row(0) - mean).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((out.row(1) - mean).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("gcn is equivariant under node relabelling") {
    Rng rng(5);
    nc::ParamStore store;
    const auto stack = GcnStack::create(store, "g", 4, 2, rng);
    const auto tree = toy::random_sample(rng, "p").tree;
    const auto n = static_cast<Eigen::Index>(tree->size());
    const auto s = ast::build_propagation(*tree);
    const auto h = random_matrix(rng, n, 4);
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    nc::Matrix sp(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            sp(i, j) = s(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    const auto base = gcn_forward(nc::constant(h), s, stack).value();
    const auto moved = gcn_forward(nc::constant(permute_rows(h, perm)), sp, stack).value();
    CHECK((moved - permute_rows(base, perm)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encoder stack matches the oracle") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) CHECK(checks::encoder_error(seed) < 1e-10);
}

TEST_CASE("code encoder ignores padding keys and sees token order") {
    Rng rng(6);
    nc::ParamStore store;
    const auto stack = EncoderStack::create(store, "e", {8, 2, 4}, 16, 2, rng);
    const auto table = store.glorot("emb", 10, 8, rng);
    const std::vector<int> ids{4, 7, 5, 0, 0};
    const std::vector<bool> mask{true, true, true, false, false};
    std::vector<nc::AttentionTrace> traces;
    const auto enc = encode_code(ids, table, stack, mask, {}, &traces);
    CHECK(enc.token_emb.value().row(3) == nc::Matrix::Zero(1, 8));
    REQUIRE(traces.size() == 2);
    for (const auto& t : traces)
        for (const auto& w : t.weights) {
            CHECK(w.col(3).cwiseAbs().maxCoeff() == 0.0);
            CHECK(w.col(4).cwiseAbs().maxCoeff() == 0.0);
        }

    // Changing a PAD row's content never reaches the real rows.
    const std::vector<int> other{4, 7, 5, 0, 9};
    const auto enc2 = encode_code(other, table, stack, mask);
    CHECK((enc.encoded.value().topRows(3) - enc2.encoded.value().topRows(3)).cwiseAbs().maxCoeff() < 1e-13);

    // Positional encoding makes the encoder order-sensitive.
    const std::vector<int> swapped{7, 4, 5, 0, 0};
    const auto enc3 = encode_code(swapped, table, stack, mask);
    CHECK((enc.encoded.value().row(2) - enc3.encoded.value().row(2)).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("ast encoder real rows ignore padded node rows") {
    Rng rng(7);
    nc::ParamStore store;
    const auto stack = EncoderStack::create(store, "a", {8, 2, 4}, 16, 1, rng);
    auto x = random_matrix(rng, 5, 8);
    const std::vector<bool> mask{true, true, true, true, false};
    const auto a = encode_ast(nc::constant(x), stack, mask).value();
    x.row(4).setConstant(3.0);
    const auto b = encode_ast(nc::constant(x), stack, mask).value();
    CHECK((a.topRows(4) - b.topRows(4)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("fusion matches the oracle in every mode") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        CHECK(checks::fuse_f1_error(seed) < 1e-10);
        for (auto mode : {FusionMode::Fgfm, FusionMode::AstOnly, FusionMode::SelfAttn, FusionMode::Concat})
            CHECK(checks::fuse_error(seed, mode) < 1e-10);
    }
}

TEST_CASE("fusion mode identities") {
    const auto c = checks::fusion_case(3, FusionMode::AstOnly);
    const auto in = checks::inputs_of(c);
    const auto f = fuse(in, c.map, c.params).value();
    const auto f1 = fuse_f1(in, c.params).value();
    CHECK((f - f1 - c.ast_emb).cwiseAbs().maxCoeff() < 1e-14);

    const auto g = checks::fusion_case(3, FusionMode::Fgfm);
    const auto gf = fuse(checks::inputs_of(g), g.map, g.params).value();
    const auto gf1 = fuse_f1(checks::inputs_of(g), g.params).value();
    CHECK((gf - gf1 - align::apply_f2(g.tok_emb, g.ast_emb, g.map)).cwiseAbs().maxCoeff() < 1e-14);

    const auto k = checks::fusion_case(3, FusionMode::Concat);
    CHECK((fuse(checks::inputs_of(k), k.map, k.params).value() - gf).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("F1 weights ignore padded tokens and padded AST rows are zero") {
    const auto c = checks::fusion_case(8, FusionMode::Fgfm);
    nc::Matrix w;
    const auto f1 = fuse_f1(checks::inputs_of(c), c.params, &w).value();
    for (std::size_t j = 0; j < c.token_mask.size(); ++j)
        if (!c.token_mask[j]) CHECK(w.col(static_cast<Eigen::Index>(j)).cwiseAbs().maxCoeff() == 0.0);
    for (std::size_t i = 0; i < c.node_mask.size(); ++i)
        if (!c.node_mask[i]) CHECK(f1.row(static_cast<Eigen::Index>(i)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero fusion parameters leave only F2") {
    auto c = checks::fusion_case(12, FusionMode::Fgfm);
    for (const auto& p : c.store.all()) p.mutable_value().setZero();
    const auto f = fuse(checks::inputs_of(c), c.map, c.params).value();
    CHECK((f - align::apply_f2(c.tok_emb, c.ast_emb, c.map)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("fused_mask is the union") {
    CHECK(fused_mask({true, true, false, false}, {true, false, true, false}) ==
          std::vector<bool>{true, true, true, false});
}
