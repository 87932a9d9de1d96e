#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mmf3/ast.hpp"

namespace mmf3::corpus {

using TokenSeq = std::vector<std::string>;

// Identifier splitting: camelCase humps, snake_case segments, digit runs and
// acronyms ("HTTPServer2" -> http, server, 2). Output is lowercase. A run of
// punctuation passes through as one token.
std::vector<std::string> split_identifier(std::string_view raw);

// Lexes on whitespace and punctuation, then splits every lexeme.
TokenSeq tokenize_code(std::string_view code);

// Summaries go through the same lexer as code.
inline TokenSeq tokenize_summary(std::string_view summary) { return tokenize_code(summary); }

inline constexpr int kPad = 0;
inline constexpr int kSos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kNumReserved = 4;

class Vocab {
  public:
    Vocab();

    // Rebuilds from a token list in id order. The first four entries must be the
    // reserved tokens in PAD, SOS, EOS, UNK order.
    static Vocab from_tokens(std::vector<std::string> tokens);

    int encode(std::string_view token) const;
    const std::string& decode(int id) const;
    std::vector<int> encode_all(const TokenSeq& tokens) const;

    bool contains(std::string_view token) const;
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    void save(const std::filesystem::path& path) const;
    static Vocab load(const std::filesystem::path& path);

    friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

  private:
    void add(std::string token);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

const std::vector<std::string>& reserved_tokens();

// Keeps the `cap` most frequent non-reserved tokens; ties go to the token seen
// first. Reserved tokens are always present and do not count toward `cap`.
Vocab build_vocab(const std::vector<TokenSeq>& corpus, std::size_t cap);

// SOS + ids + EOS, truncated to `length` then right-padded with PAD.
std::vector<int> encode_summary(const TokenSeq& summary, const Vocab& vocab, std::size_t length);

// Row-major integer/boolean grid used for padded batches.
template <typename T>
struct Grid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

    T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// One sample after id encoding and before padding.
struct EncodedSample {
    std::vector<int> code_ids;
    std::size_t ast_nodes = 0;
    std::vector<int> summary_ids; // SOS ... EOS, unpadded
};

struct Batch {
    Grid<int> code_ids;
    Grid<std::uint8_t> code_mask;
    Grid<std::uint8_t> ast_mask; // true on real (kept) AST nodes
    Grid<int> summary_ids;
    Grid<std::uint8_t> summary_mask;

    std::size_t size() const { return code_ids.rows; }
};

Batch pad_batch(const std::vector<EncodedSample>& samples, std::size_t l_code, std::size_t l_ast,
                std::size_t l_sum);

struct Sample {
    std::string id;
    std::string code;
    std::string summary;
    std::shared_ptr<const ast::Ast> tree;
};

struct LoadStats {
    std::size_t lines = 0;
    std::size_t kept = 0;
    std::size_t dropped_empty_summary = 0;
    std::size_t dropped_empty_code = 0;
};

// Reads JSON Lines records {"id","code","summary","ast"}. "ast" is either an
// inline record or a path (relative to the dataset file) to an AST JSON file.
// Throws DataError with the offending line number on schema violations.
std::vector<Sample> load_dataset(const std::filesystem::path& path, LoadStats* stats = nullptr);

struct Split {
    std::vector<Sample> train;
    std::vector<Sample> valid;
    std::vector<Sample> test;
};

// Seeded shuffle then split by fractions. Validation and test samples whose
// (code, summary) pair also occurs in the training part are removed.
Split split_dataset(std::vector<Sample> samples, double train_fraction, double valid_fraction,
                    std::uint64_t seed);

} // namespace mmf3::corpus
