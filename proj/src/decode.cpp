#include "mmf3/decode.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mmf3/corpus.hpp"
#include "mmf3/errors.hpp"

namespace mmf3 {

DecoderParams DecoderParams::create(nc::ParamStore& store, const std::string& prefix,
                                    const nc::AttentionConfig& attention, Eigen::Index ff_dim, int layers,
                                    Eigen::Index vocab, Rng& rng) {
    const auto d = attention.d_model;
    DecoderParams p;
    p.embedding = store.glorot(prefix + ".embedding", vocab, d, rng);
    for (int l = 0; l < layers; ++l) {
        const auto lp = prefix + ".layer" + std::to_string(l);
        DecoderLayer layer;
        layer.self_attention = nc::AttentionParams::create(store, lp + ".self_attn", attention, rng);
        layer.norm1 = nc::LayerNormParams::create(store, lp + ".norm1", d);
        layer.code_attention = nc::AttentionParams::create(store, lp + ".code_attn", attention, rng);
        layer.norm2 = nc::LayerNormParams::create(store, lp + ".norm2", d);
        layer.fgf_attention = nc::AttentionParams::create(store, lp + ".fgf_attn", attention, rng);
        layer.norm3 = nc::LayerNormParams::create(store, lp + ".norm3", d);
        layer.ffn = nc::FeedForwardParams::create(store, lp + ".ffn", d, ff_dim, rng);
        layer.norm4 = nc::LayerNormParams::create(store, lp + ".norm4", d);
        p.layers.push_back(std::move(layer));
    }
    p.w_out = store.glorot(prefix + ".w_out", d, vocab, rng);
    p.b_out = store.constant(prefix + ".b_out", 1, vocab, 0.0);
    return p;
}

nc::Var decoder_forward(std::span<const int> input_ids, const DecoderMemory& memory, const DecoderParams& params,
                        DropoutCtx drop) {
    if (input_ids.empty()) throw ShapeError("decoder: empty input");
    if (memory.x_e_tok.rows() != static_cast<Eigen::Index>(memory.token_mask.size()) ||
        memory.fused.rows() != static_cast<Eigen::Index>(memory.fused_mask.size())) {
        throw ShapeError("decoder: memory masks do not match memory rows");
    }
    const auto t = static_cast<Eigen::Index>(input_ids.size());
    std::vector<bool> self_keys(input_ids.size());
    for (std::size_t i = 0; i < input_ids.size(); ++i) self_keys[i] = input_ids[i] != corpus::kPad;

    const auto self_allowed = nc::causal_mask(self_keys);
    const auto code_allowed = nc::key_padding_mask(t, memory.token_mask);
    const auto fgf_allowed = nc::key_padding_mask(t, memory.fused_mask);

    const auto emb = nc::embedding(params.embedding, input_ids, corpus::kPad);
    nc::Var y = nc::dropout(nc::add(emb, nc::constant(nc::positional_encoding(t, emb.cols()))), drop.rate, drop.rng);
    for (const auto& layer : params.layers) {
        const auto a = nc::multi_head_attention(y, y, y, layer.self_attention, self_allowed);
        const auto y_d = nc::layer_norm(nc::add(y, nc::dropout(a, drop.rate, drop.rng)), layer.norm1);
        const auto b = nc::multi_head_attention(y_d, memory.x_e_tok, memory.x_e_tok, layer.code_attention, code_allowed);
        const auto y_tok = nc::layer_norm(nc::add(y_d, nc::dropout(b, drop.rate, drop.rng)), layer.norm2);
        const auto c = nc::multi_head_attention(y_tok, memory.fused, memory.fused, layer.fgf_attention, fgf_allowed);
        const auto y_td = nc::layer_norm(nc::add(y_tok, nc::dropout(c, drop.rate, drop.rng)), layer.norm3);
        const auto f = nc::feed_forward(y_td, layer.ffn);
        y = nc::layer_norm(nc::add(y_td, nc::dropout(f, drop.rate, drop.rng)), layer.norm4);
    }
    return nc::add_row(nc::matmul(y, params.w_out), params.b_out);
}

nc::Var cross_entropy(const nc::Var& logits, std::span<const int> targets) {
    std::vector<bool> mask(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) mask[i] = targets[i] != corpus::kPad;
    return nc::cross_entropy_sum(logits, targets, mask);
}

nc::Var batch_loss(std::span<const nc::Var> per_sample_sums) {
    if (per_sample_sums.empty()) throw ShapeError("batch_loss: empty batch");
    nc::Var total = per_sample_sums.front();
    for (std::size_t i = 1; i < per_sample_sums.size(); ++i) total = nc::add(total, per_sample_sums[i]);
    return nc::scale(total, 1.0 / static_cast<double>(per_sample_sums.size()));
}

TeacherForcing teacher_forcing(std::span<const int> summary_ids) {
    if (summary_ids.size() < 2 || summary_ids.front() != corpus::kSos) {
        throw DataError("summary ids must start with SOS and hold at least two entries");
    }
    TeacherForcing tf;
    tf.input.assign(summary_ids.begin(), summary_ids.end() - 1);
    tf.target.assign(summary_ids.begin() + 1, summary_ids.end());
    return tf;
}

bool is_candidate(int id) { return id != corpus::kPad && id != corpus::kSos; }

Hypothesis greedy_decode(const NextTokenFn& next, int vocab_size, int max_len) {
    Hypothesis h;
    std::vector<int> prefix{corpus::kSos};
    while (static_cast<int>(h.tokens.size()) < max_len) {
        const auto lp = next(prefix);
        if (lp.size() != vocab_size) throw ShapeError("greedy_decode: scorer width differs from vocabulary");
        int best = -1;
        for (int id = 0; id < vocab_size; ++id) {
            if (is_candidate(id) && (best < 0 || lp(id) > lp(best))) best = id;
        }
        h.tokens.push_back(best);
        h.log_prob += lp(best);
        prefix.push_back(best);
        if (best == corpus::kEos) {
            h.finished = true;
            break;
        }
    }
    if (static_cast<int>(h.tokens.size()) >= max_len) h.finished = true;
    return h;
}

Hypothesis beam_search(const NextTokenFn& next, int vocab_size, int beam, int max_len) {
    if (beam < 1) throw std::invalid_argument("beam size must be at least 1");
    struct Candidate {
        double score;
        int token;
        std::size_t parent;
    };

    std::vector<Hypothesis> alive{Hypothesis{}};
    std::vector<Hypothesis> finished;
    for (int step = 0; step < max_len && !alive.empty(); ++step) {
        std::vector<Candidate> cands;
        for (std::size_t hi = 0; hi < alive.size(); ++hi) {
            std::vector<int> prefix{corpus::kSos};
            prefix.insert(prefix.end(), alive[hi].tokens.begin(), alive[hi].tokens.end());
            const auto lp = next(prefix);
            if (lp.size() != vocab_size) throw ShapeError("beam_search: scorer width differs from vocabulary");
            for (int id = 0; id < vocab_size; ++id) {
                if (is_candidate(id)) cands.push_back({alive[hi].log_prob + lp(id), id, hi});
            }
        }
        std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.token != b.token) return a.token < b.token;
            return a.parent < b.parent;
        });
        if (cands.size() > static_cast<std::size_t>(beam)) cands.resize(static_cast<std::size_t>(beam));

        std::vector<Hypothesis> next_alive;
        for (const auto& c : cands) {
            Hypothesis h = alive[c.parent];
            h.tokens.push_back(c.token);
            h.log_prob = c.score;
            if (c.token == corpus::kEos || static_cast<int>(h.tokens.size()) >= max_len) {
                h.finished = true;
                finished.push_back(std::move(h));
            } else {
                next_alive.push_back(std::move(h));
            }
        }
        alive = std::move(next_alive);

        // Log-probabilities only decrease, so no live prefix can overtake the best finished one.
        if (!finished.empty() && !alive.empty()) {
            double best_finished = -std::numeric_limits<double>::infinity();
            for (const auto& f : finished) best_finished = std::max(best_finished, f.log_prob);
            double best_alive = -std::numeric_limits<double>::infinity();
            for (const auto& a : alive) best_alive = std::max(best_alive, a.log_prob);
            if (best_finished >= best_alive) break;
        }
    }

    finished.push_back(greedy_decode(next, vocab_size, max_len));
    std::size_t best = 0;
    for (std::size_t i = 1; i < finished.size(); ++i) {
        if (finished[i].log_prob > finished[best].log_prob) best = i;
    }
    return finished[best];
}

void write_predictions(const std::vector<Prediction>& predictions, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& p : predictions)
        out << nlohmann::json{{"id", p.id}, {"prediction", p.prediction}, {"reference", p.reference}}.dump() << '\n';
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open predictions " + path.string());
    std::vector<Prediction> out;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            out.push_back({j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump(),
                           j.at("prediction").get<std::string>(), j.at("reference").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + " line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

std::vector<std::string> split_tokens(const std::string& joined) {
    std::istringstream in(joined);
    std::vector<std::string> out;
    for (std::string t; in >> t;) out.push_back(t);
    return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

} // namespace mmf3
