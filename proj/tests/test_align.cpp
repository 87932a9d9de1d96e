#include <doctest.h>

#include "mmf3/align.hpp"
#include "mmf3/errors.hpp"
#include "mmf3/rng.hpp"
#include "mmf3/toy_corpus.hpp"
#include "oracles.hpp"

using namespace mmf3;
using namespace mmf3::align;

namespace {

ast::Ast tree_of(const std::string& text) {
    return ast::validate_ast(ast::parse_ast_record(nlohmann::json::parse(text)));
}

MatchMap from_oracle(const std::map<int, std::pair<std::size_t, std::size_t>>& m) {
    MatchMap out;
    for (const auto& [k, v] : m) out[k] = {v.first, v.second};
    return out;
}

} // namespace

TEST_CASE("the bundled matching example maps leaf 3 to token 4") {
    const auto s = toy::matching_example();
    const auto map = build_match_map(*s.tree, corpus::tokenize_code(s.code));
    REQUIRE(map.count(3) == 1);
    CHECK(map.at(3) == Span{4, 5});
    CHECK(to_json(map).at("3") == nlohmann::json::array({4, 5}));
}

TEST_CASE("build_match_map small cases") {
    const auto t = tree_of(R"({"nodes":[{"id":0,"label":"S","children":[1,4]},{"id":1,"label":"L","children":[2,3]},
        {"id":2,"label":"ter_x","children":[]},{"id":3,"label":"ter_=","children":[]},
        {"id":4,"label":"R","children":[5]},{"id":5,"label":"ter_x","children":[]}]})");
    CHECK(build_match_map(t, {}).empty());
    const auto m = build_match_map(t, {"x", "=", "x"});
    CHECK(m.at(2) == Span{0, 1});
    CHECK(m.at(3) == Span{1, 2});
    CHECK(m.at(5) == Span{2, 3});

    const auto p = tree_of(R"({"nodes":[{"id":0,"label":"C","children":[1,2]},{"id":1,"label":"ter_Double","children":[]},
        {"id":2,"label":"ter_parseDouble","children":[]}]})");
    const auto pm = build_match_map(p, corpus::tokenize_code("Double.parseDouble(s)"));
    CHECK(pm.at(1) == Span{0, 1});
    CHECK(pm.at(2) == Span{2, 4});

    // A missing leaf keeps the cursor where it was.
    const auto q = tree_of(R"({"nodes":[{"id":0,"label":"C","children":[1,2,3]},{"id":1,"label":"ter_a","children":[]},
        {"id":2,"label":"ter_zz","children":[]},{"id":3,"label":"ter_b","children":[]}]})");
    const auto qm = build_match_map(q, {"a", "b"});
    CHECK(qm.size() == 2);
    CHECK(qm.at(3) == Span{1, 2});
}

TEST_CASE("build_match_map equals the brute-force matcher on generated samples") {
    Rng rng(77);
    for (int n = 0; n < 300; ++n) {
        const auto s = toy::random_sample(rng, "m");
        auto tokens = corpus::tokenize_code(s.code);
        if (n % 3 == 1) rng.shuffle(tokens.begin(), tokens.end());
        const auto got = build_match_map(*s.tree, tokens);
        REQUIRE(got == from_oracle(oracle::match(*s.tree, tokens)));
        Span prev{0, 0};
        for (const auto& [leaf, span] : got) {
            CHECK(span.start >= prev.end);
            prev = span;
        }
    }
}

TEST_CASE("clip_match_map drops spans cut by truncation") {
    MatchMap m{{1, {0, 1}}, {3, {2, 4}}, {6, {5, 6}}};
    const auto c = clip_match_map(m, 3, 7);
    CHECK(c.size() == 1);
    CHECK(clip_match_map(m, 10, 4).size() == 2);
}

TEST_CASE("apply_f2 against a loop oracle") {
    Rng rng(4);
    Eigen::MatrixXd tok(8, 4), ast_e(8, 4);
    for (Eigen::Index i = 0; i < tok.size(); ++i) tok(i) = rng.uniform(-1, 1), ast_e(i) = rng.uniform(-1, 1);
    CHECK(apply_f2(tok, ast_e, {}) == tok);

    const MatchMap single{{3, {4, 5}}};
    const auto f = apply_f2(tok, ast_e, single);
    CHECK(f.row(4) == tok.row(4) + ast_e.row(3));
    for (int r : {0, 1, 2, 3, 5, 6, 7}) CHECK(f.row(r) == tok.row(r));

    const MatchMap three{{1, {0, 2}}, {2, {3, 4}}, {6, {5, 8}}};
    Eigen::MatrixXd want = tok;
    for (const auto& [leaf, span] : three)
        for (auto r = span.start; r < span.end; ++r)
            for (int c = 0; c < 4; ++c) want(static_cast<Eigen::Index>(r), c) += ast_e(leaf, c);
    CHECK((apply_f2(tok, ast_e, three) - want).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((apply_f2(2.5 * tok, 2.5 * ast_e, three) - 2.5 * apply_f2(tok, ast_e, three)).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(apply_f2(tok, ast_e, {{9, {0, 1}}}), ShapeError);
    CHECK_THROWS_AS(apply_f2(tok, ast_e, {{1, {7, 9}}}), ShapeError);
    CHECK_THROWS_AS(apply_f2(tok, ast_e, {{1, {2, 4}}, {2, {3, 5}}}), ShapeError);
}
