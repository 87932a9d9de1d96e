#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace mmf3 {

enum class FusionMode { Fgfm, AstOnly, SelfAttn, Concat };

std::string_view to_string(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view name);

// Model and training settings. Serialized as a flat JSON object whose keys are
// the field names below.
struct Config {
    // model
    int d_model = 64;
    int heads = 4;
    int d_k = 64;
    int ff_dim = 128;
    int encoder_layers = 2;
    int ast_encoder_layers = 2;
    int decoder_layers = 2;
    int gcn_layers = 2;
    int max_len = 64; // shared L for code tokens and AST nodes
    int max_summary_len = 24;
    FusionMode fusion_mode = FusionMode::Fgfm;
    std::uint64_t node_embedding_seed = 17;

    // data
    int code_vocab_cap = 30000;
    int summary_vocab_cap = 30000;
    double train_fraction = 0.8;
    double valid_fraction = 0.1;

    // training
    double learning_rate = 0.001;
    int batch_size = 32;
    double dropout = 0.2;
    int max_epochs = 200;
    int patience = 20;
    double clip_norm = 5.0; // <= 0 disables clipping
    std::uint64_t seed = 1;
    int beam_size = 4;

    // Throws std::invalid_argument naming the first bad field.
    void validate() const;

    nlohmann::json to_json() const;
    // Unknown keys are rejected; missing keys keep their current value.
    void merge_json(const nlohmann::json& j);
    static Config from_file(const std::filesystem::path& path);

    friend bool operator==(const Config&, const Config&) = default;
};

} // namespace mmf3
