#include "mmf3/config.hpp"

#include <fstream>
#include <stdexcept>

#include "mmf3/errors.hpp"

namespace mmf3 {

std::string_view to_string(FusionMode mode) {
    switch (mode) {
    case FusionMode::Fgfm: return "fgfm";
    case FusionMode::AstOnly: return "ast_only";
    case FusionMode::SelfAttn: return "self_attn";
    case FusionMode::Concat: return "concat";
    }
    return "unknown";
}

FusionMode parse_fusion_mode(std::string_view name) {
    for (auto m : {FusionMode::Fgfm, FusionMode::AstOnly, FusionMode::SelfAttn, FusionMode::Concat}) {
        if (to_string(m) == name) return m;
    }
    throw std::invalid_argument("unknown fusion mode \"" + std::string(name) + "\"");
}

void Config::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0)) throw std::invalid_argument(std::string(name) + " must be positive");
    };
    positive(d_model, "d_model");
    if (d_model % 2 != 0) throw std::invalid_argument("d_model must be even");
    positive(heads, "heads");
    positive(d_k, "d_k");
    positive(ff_dim, "ff_dim");
    positive(encoder_layers, "encoder_layers");
    positive(ast_encoder_layers, "ast_encoder_layers");
    positive(decoder_layers, "decoder_layers");
    positive(gcn_layers, "gcn_layers");
    positive(max_len, "max_len");
    if (max_summary_len < 2) throw std::invalid_argument("max_summary_len must be at least 2");
    positive(code_vocab_cap, "code_vocab_cap");
    positive(summary_vocab_cap, "summary_vocab_cap");
    positive(train_fraction, "train_fraction");
    if (valid_fraction < 0 || train_fraction + valid_fraction > 1.0) {
        throw std::invalid_argument("train_fraction + valid_fraction must be at most 1");
    }
    if (learning_rate < 0) throw std::invalid_argument("learning_rate must be non-negative");
    positive(batch_size, "batch_size");
    if (dropout < 0 || dropout >= 1) throw std::invalid_argument("dropout must be in [0, 1)");
    positive(max_epochs, "max_epochs");
    positive(patience, "patience");
    positive(beam_size, "beam_size");
}

nlohmann::json Config::to_json() const {
    return {
        {"d_model", d_model},
        {"heads", heads},
        {"d_k", d_k},
        {"ff_dim", ff_dim},
        {"encoder_layers", encoder_layers},
        {"ast_encoder_layers", ast_encoder_layers},
        {"decoder_layers", decoder_layers},
        {"gcn_layers", gcn_layers},
        {"max_len", max_len},
        {"max_summary_len", max_summary_len},
        {"fusion_mode", std::string(to_string(fusion_mode))},
        {"node_embedding_seed", node_embedding_seed},
        {"code_vocab_cap", code_vocab_cap},
        {"summary_vocab_cap", summary_vocab_cap},
        {"train_fraction", train_fraction},
        {"valid_fraction", valid_fraction},
        {"learning_rate", learning_rate},
        {"batch_size", batch_size},
        {"dropout", dropout},
        {"max_epochs", max_epochs},
        {"patience", patience},
        {"clip_norm", clip_norm},
        {"seed", seed},
        {"beam_size", beam_size},
    };
}

void Config::merge_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
    const auto known = to_json();
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw std::invalid_argument("unknown config key \"" + key + "\"");
    }
    auto take = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    try {
        take("d_model", d_model);
        take("heads", heads);
        take("d_k", d_k);
        take("ff_dim", ff_dim);
        take("encoder_layers", encoder_layers);
        take("ast_encoder_layers", ast_encoder_layers);
        take("decoder_layers", decoder_layers);
        take("gcn_layers", gcn_layers);
        take("max_len", max_len);
        take("max_summary_len", max_summary_len);
        if (j.contains("fusion_mode")) fusion_mode = parse_fusion_mode(j.at("fusion_mode").get<std::string>());
        take("node_embedding_seed", node_embedding_seed);
        take("code_vocab_cap", code_vocab_cap);
        take("summary_vocab_cap", summary_vocab_cap);
        take("train_fraction", train_fraction);
        take("valid_fraction", valid_fraction);
        take("learning_rate", learning_rate);
        take("batch_size", batch_size);
        take("dropout", dropout);
        take("max_epochs", max_epochs);
        take("patience", patience);
        take("clip_norm", clip_norm);
        take("seed", seed);
        take("beam_size", beam_size);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("bad config value: ") + e.what());
    }
}

Config Config::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    Config c;
    c.merge_json(j);
    return c;
}

} // namespace mmf3
