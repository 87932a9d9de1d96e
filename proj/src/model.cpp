#include "mmf3/model.hpp"

#include "mmf3/errors.hpp"
#include "mmf3/rng.hpp"

namespace mmf3 {

nc::AttentionConfig attention_config(const Config& config) {
    return {config.d_model, config.heads, config.d_k};
}

Example make_example(const corpus::Sample& sample, const corpus::Vocab& code_vocab,
                     const corpus::Vocab& summary_vocab, const Config& config) {
    if (!sample.tree) throw DataError("sample " + sample.id + " has no AST");
    const auto limit = static_cast<std::size_t>(config.max_len);
    const auto tokens = corpus::tokenize_code(sample.code);

    Example ex;
    ex.id = sample.id;
    ex.code_ids = code_vocab.encode_all(tokens);
    if (ex.code_ids.size() > limit) ex.code_ids.resize(limit);
    ex.node_features = ast::init_node_embeddings(*sample.tree, static_cast<std::size_t>(config.d_model),
                                                 config.node_embedding_seed, limit);
    ex.propagation = ast::build_propagation(*sample.tree, limit);
    ex.match = align::clip_match_map(align::build_match_map(*sample.tree, tokens), ex.code_ids.size(), limit);
    ex.reference = corpus::tokenize_summary(sample.summary);
    ex.summary_ids =
        corpus::encode_summary(ex.reference, summary_vocab, static_cast<std::size_t>(config.max_summary_len));
    while (!ex.summary_ids.empty() && ex.summary_ids.back() == corpus::kPad) ex.summary_ids.pop_back();
    return ex;
}

std::vector<Example> make_examples(const std::vector<corpus::Sample>& samples, const corpus::Vocab& code_vocab,
                                   const corpus::Vocab& summary_vocab, const Config& config) {
    std::vector<Example> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(make_example(s, code_vocab, summary_vocab, config));
    return out;
}

Model::Model(const Config& config, std::size_t code_vocab_size, std::size_t summary_vocab_size)
    : config_(config), code_vocab_size_(code_vocab_size), summary_vocab_size_(summary_vocab_size) {
    config_.validate();
    Rng rng(config_.seed);
    const auto attn = attention_config(config_);
    const auto d = static_cast<Eigen::Index>(config_.d_model);
    code_embedding_ = store_.glorot("code.embedding", static_cast<Eigen::Index>(code_vocab_size), d, rng);
    code_encoder_ = EncoderStack::create(store_, "code_encoder", attn, config_.ff_dim, config_.encoder_layers, rng);
    gcn_ = GcnStack::create(store_, "gcn", d, config_.gcn_layers, rng);
    ast_encoder_ = EncoderStack::create(store_, "ast_encoder", attn, config_.ff_dim, config_.ast_encoder_layers, rng);
    fusion_ = FusionParams::create(store_, "fusion", config_.fusion_mode, attn, rng);
    decoder_ = DecoderParams::create(store_, "decoder", attn, config_.ff_dim, config_.decoder_layers,
                                     static_cast<Eigen::Index>(summary_vocab_size), rng);
}

Encoded Model::encode(const Example& ex, DropoutCtx drop, Eigen::Index pad_to) const {
    const auto n_tok = static_cast<Eigen::Index>(ex.code_ids.size());
    const auto n_ast = static_cast<Eigen::Index>(ex.nodes());
    if (n_tok == 0 || n_ast == 0) throw DataError("example " + ex.id + " has no tokens or no AST nodes");
    const auto rows = std::max({n_tok, n_ast, pad_to});
    const auto d = static_cast<Eigen::Index>(config_.d_model);

    std::vector<int> ids(static_cast<std::size_t>(rows), corpus::kPad);
    std::copy(ex.code_ids.begin(), ex.code_ids.end(), ids.begin());
    std::vector<bool> token_mask(static_cast<std::size_t>(rows), false);
    std::vector<bool> node_mask(static_cast<std::size_t>(rows), false);
    for (Eigen::Index i = 0; i < rows; ++i) {
        token_mask[static_cast<std::size_t>(i)] = i < n_tok && ids[static_cast<std::size_t>(i)] != corpus::kPad;
        node_mask[static_cast<std::size_t>(i)] = i < n_ast;
    }

    Encoded out;
    out.code = encode_code(ids, code_embedding_, code_encoder_, token_mask, drop);

    nc::Matrix features = nc::Matrix::Zero(rows, d);
    features.topRows(n_ast) = ex.node_features;
    nc::Matrix prop = nc::Matrix::Zero(rows, rows);
    prop.topLeftCorner(n_ast, n_ast) = ex.propagation;
    // Padded rows have zero features and no edges, so they stay zero through the GCN.
    out.x_ast = gcn_forward(nc::constant(std::move(features)), prop, gcn_);
    out.x_e_ast = encode_ast(out.x_ast, ast_encoder_, node_mask, drop);

    FusionInputs in{out.code.encoded, out.x_e_ast, out.code.token_emb, out.x_ast, token_mask, node_mask};
    out.fused = fuse(in, ex.match, fusion_);
    out.memory = DecoderMemory{out.code.encoded, token_mask, out.fused, fused_mask(token_mask, node_mask)};
    return out;
}

nc::Var Model::loss(const Example& ex, DropoutCtx drop) const {
    const auto enc = encode(ex, drop);
    const auto tf = teacher_forcing(ex.summary_ids);
    const auto logits = decoder_forward(tf.input, enc.memory, decoder_, drop);
    return cross_entropy(logits, tf.target);
}

nc::RowVector Model::next_log_probs(const DecoderMemory& memory, std::span<const int> prefix) const {
    nc::NoGradGuard no_grad;
    const auto logits = decoder_forward(prefix, memory, decoder_);
    return nc::log_softmax_row(logits.value().row(logits.rows() - 1));
}

Hypothesis Model::summarize(const Example& ex, int beam) const {
    nc::NoGradGuard no_grad;
    const auto enc = encode(ex);
    const NextTokenFn next = [&](std::span<const int> prefix) { return next_log_probs(enc.memory, prefix); };
    const auto vocab = static_cast<int>(summary_vocab_size_);
    const int max_len = config_.max_summary_len - 1;
    return beam <= 1 ? greedy_decode(next, vocab, max_len) : beam_search(next, vocab, beam, max_len);
}

corpus::TokenSeq detokenize(std::span<const int> ids, const corpus::Vocab& vocab) {
    corpus::TokenSeq out;
    for (int id : ids) {
        if (id == corpus::kEos) break;
        if (id == corpus::kSos || id == corpus::kPad) continue;
        out.push_back(vocab.decode(id));
    }
    return out;
}

} // namespace mmf3
