#include "mmf3/gradcheck.hpp"

#include <cmath>

#include "mmf3/encoders.hpp"
#include "mmf3/fusion.hpp"
#include "mmf3/model.hpp"
#include "mmf3/rng.hpp"
#include "mmf3/toy_corpus.hpp"
#include "mmf3/trainer.hpp"

namespace mmf3 {

GradCheckResult check_gradients(const std::string& name, const std::function<nc::Var()>& f,
                                const std::vector<nc::Var>& inputs, double step) {
    for (const auto& v : inputs) v.node().grad.resize(0, 0);
    nc::backward(f());
    std::vector<nc::Matrix> analytic;
    for (const auto& v : inputs) analytic.push_back(v.grad());

    GradCheckResult result{name, 0.0, 0};
    nc::NoGradGuard no_grad;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto& value = inputs[k].node().value;
        for (Eigen::Index i = 0; i < value.size(); ++i) {
            const double saved = value(i);
            value(i) = saved + step;
            const double up = f().value()(0, 0);
            value(i) = saved - step;
            const double down = f().value()(0, 0);
            value(i) = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[k](i);
            const double denom = std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
            result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
            ++result.entries;
        }
        inputs[k].node().grad.resize(0, 0);
    }
    return result;
}

namespace {

nc::Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    nc::Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.uniform(-scale, scale);
    return m;
}

nc::Var leaf_of(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    return nc::leaf(random_matrix(rng, r, c, scale), true);
}

// sum(out .* R) for a fixed random R, so every output entry gets a distinct weight.
nc::Var project(const nc::Var& out, const nc::Matrix& r) { return nc::sum(nc::hadamard_const(out, r)); }

std::vector<nc::Var> vars_of(const nc::ParamStore& store) {
    std::vector<nc::Var> out;
    for (const auto& p : store.all())
        if (p.trainable()) out.push_back(p.var());
    return out;
}

} // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed) {
    constexpr Eigen::Index d = 16;
    constexpr Eigen::Index l = 8;
    Rng rng(seed);
    std::vector<GradCheckResult> out;

    {
        const auto x = leaf_of(rng, l, d);
        const auto w = leaf_of(rng, d, d);
        const auto b = leaf_of(rng, 1, d);
        const auto r = random_matrix(rng, l, d);
        out.push_back(check_gradients("linear", [&] { return project(nc::add_row(nc::matmul(x, w), b), r); }, {x, w, b}));
    }
    {
        const auto s = leaf_of(rng, l, l, 2.0);
        const auto r = random_matrix(rng, l, l);
        nc::BoolMatrix allowed = nc::causal_mask(std::vector<bool>(static_cast<std::size_t>(l), true));
        out.push_back(check_gradients("softmax", [&] { return project(nc::softmax_rows(s), r); }, {s}));
        out.push_back(
            check_gradients("masked_softmax", [&] { return project(nc::masked_softmax(s, allowed), r); }, {s}));
    }
    {
        nc::ParamStore store;
        const auto p = nc::AttentionParams::create(store, "mha", {d, 2, 8}, rng);
        const auto q = leaf_of(rng, l, d);
        const auto kv = leaf_of(rng, l - 2, d);
        std::vector<bool> keys(static_cast<std::size_t>(l - 2), true);
        keys[3] = false;
        keys[5] = false;
        const auto allowed = nc::key_padding_mask(l, keys);
        const auto r = random_matrix(rng, l, d);
        auto inputs = vars_of(store);
        inputs.push_back(q);
        inputs.push_back(kv);
        out.push_back(check_gradients(
            "multi_head_attention", [&] { return project(nc::multi_head_attention(q, kv, kv, p, allowed), r); },
            inputs));
    }
    {
        nc::ParamStore store;
        const auto p = nc::FeedForwardParams::create(store, "ffn", d, 2 * d, rng);
        const auto x = leaf_of(rng, l, d);
        const auto r = random_matrix(rng, l, d);
        auto inputs = vars_of(store);
        inputs.push_back(x);
        out.push_back(check_gradients("feed_forward", [&] { return project(nc::feed_forward(x, p), r); }, inputs));
    }
    {
        const auto x = leaf_of(rng, l, d);
        const auto g = leaf_of(rng, 1, d);
        const auto b = leaf_of(rng, 1, d);
        const auto r = random_matrix(rng, l, d);
        out.push_back(check_gradients("layer_norm", [&] { return project(nc::layer_norm(x, g, b), r); }, {x, g, b}));
    }
    {
        const auto table = leaf_of(rng, 12, d);
        const std::vector<int> ids{5, 0, 7, 7, 11, 4, 0, 9};
        const auto pe = nc::constant(nc::positional_encoding(l, d));
        const auto r = random_matrix(rng, l, d);
        out.push_back(check_gradients(
            "embedding_plus_pe", [&] { return project(nc::add(nc::embedding(table, ids, 0), pe), r); }, {table}));
    }
    {
        nc::ParamStore store;
        const auto gcn = GcnStack::create(store, "gcn", d, 2, rng);
        const auto tree = toy::matching_example().tree;
        const auto prop = ast::build_propagation(*tree, static_cast<std::size_t>(l));
        const auto x = leaf_of(rng, prop.rows(), d);
        const auto r = random_matrix(rng, prop.rows(), d);
        auto inputs = vars_of(store);
        inputs.push_back(x);
        out.push_back(check_gradients("gcn", [&] { return project(gcn_forward(x, prop, gcn), r); }, inputs));
    }
    {
        nc::ParamStore store;
        const auto stack = EncoderStack::create(store, "enc", {d, 2, 8}, 2 * d, 2, rng);
        const auto x = leaf_of(rng, l, d);
        std::vector<bool> mask(static_cast<std::size_t>(l), true);
        mask[6] = mask[7] = false;
        const auto r = random_matrix(rng, l, d);
        auto inputs = vars_of(store);
        inputs.push_back(x);
        out.push_back(
            check_gradients("encoder_stack", [&] { return project(encoder_forward(x, stack, mask), r); }, inputs));
    }
    {
        nc::ParamStore store;
        const auto dec = DecoderParams::create(store, "dec", {d, 2, 8}, 2 * d, 2, 10, rng);
        const auto mem_tok = leaf_of(rng, l, d);
        const auto mem_f = leaf_of(rng, l, d);
        std::vector<bool> tok_mask(static_cast<std::size_t>(l), true), f_mask(static_cast<std::size_t>(l), true);
        tok_mask[7] = false;
        const DecoderMemory memory{mem_tok, tok_mask, mem_f, f_mask};
        const std::vector<int> input{1, 4, 5, 6, 9};
        const std::vector<int> target{4, 5, 6, 9, 2};
        auto inputs = vars_of(store);
        inputs.push_back(mem_tok);
        inputs.push_back(mem_f);
        out.push_back(check_gradients(
            "decoder_cross_entropy", [&] { return cross_entropy(decoder_forward(input, memory, dec), target); },
            inputs));
    }
    for (auto mode : {FusionMode::Fgfm, FusionMode::AstOnly, FusionMode::SelfAttn, FusionMode::Concat}) {
        Config cfg;
        cfg.d_model = static_cast<int>(d);
        cfg.heads = 2;
        cfg.d_k = 8;
        cfg.ff_dim = 32;
        cfg.encoder_layers = cfg.ast_encoder_layers = cfg.decoder_layers = 2;
        cfg.max_len = static_cast<int>(l);
        cfg.max_summary_len = 6;
        cfg.fusion_mode = mode;
        cfg.seed = seed + 11;
        const auto sample = toy::matching_example();
        const auto vocabs = build_vocabs({sample}, cfg);
        const Model model(cfg, vocabs.code.size(), vocabs.summary.size());
        const auto ex = make_example(sample, vocabs.code, vocabs.summary, cfg);
        out.push_back(check_gradients("full_model[" + std::string(to_string(mode)) + "]",
                                      [&] { return model.loss(ex); }, vars_of(model.params())));
    }
    return out;
}

} // namespace mmf3
