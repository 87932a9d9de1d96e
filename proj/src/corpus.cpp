#include "mmf3/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <utility>

#include <nlohmann/json.hpp>

#include "mmf3/errors.hpp"
#include "mmf3/rng.hpp"

namespace mmf3::corpus {

namespace {

enum class CharClass { Upper, Lower, Digit, Underscore, Space, Punct };

// ASCII-only classification so results never depend on the C locale. Bytes
// >= 0x80 (UTF-8 sequences) count as caseless letters.
CharClass classify(unsigned char c) {
    if (c >= 'A' && c <= 'Z') return CharClass::Upper;
    if ((c >= 'a' && c <= 'z') || c >= 0x80) return CharClass::Lower;
    if (c >= '0' && c <= '9') return CharClass::Digit;
    if (c == '_') return CharClass::Underscore;
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') return CharClass::Space;
    return CharClass::Punct;
}

bool is_word_char(unsigned char c) {
    const auto k = classify(c);
    return k == CharClass::Upper || k == CharClass::Lower || k == CharClass::Digit || k == CharClass::Underscore;
}

char to_lower(unsigned char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c); }

std::string lower(std::string_view s) {
    std::string out(s.size(), '\0');
    std::transform(s.begin(), s.end(), out.begin(), [](char c) { return to_lower(static_cast<unsigned char>(c)); });
    return out;
}

// Splits one underscore-free alphanumeric segment on case and digit boundaries.
void split_segment(std::string_view seg, std::vector<std::string>& out) {
    std::size_t start = 0;
    for (std::size_t i = 1; i < seg.size(); ++i) {
        const auto prev = classify(static_cast<unsigned char>(seg[i - 1]));
        const auto cur = classify(static_cast<unsigned char>(seg[i]));
        bool boundary = false;
        if ((prev == CharClass::Digit) != (cur == CharClass::Digit)) {
            boundary = true;
        } else if (prev == CharClass::Lower && cur == CharClass::Upper) {
            boundary = true;
        } else if (prev == CharClass::Upper && cur == CharClass::Upper && i + 1 < seg.size() &&
                   classify(static_cast<unsigned char>(seg[i + 1])) == CharClass::Lower) {
            // Last capital of an acronym run starts the next word: HTTPServer -> HTTP|Server.
            boundary = true;
        }
        if (boundary) {
            out.push_back(lower(seg.substr(start, i - start)));
            start = i;
        }
    }
    if (start < seg.size()) out.push_back(lower(seg.substr(start)));
}

} // namespace

std::vector<std::string> split_identifier(std::string_view raw) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < raw.size()) {
        const auto c = static_cast<unsigned char>(raw[i]);
        const auto k = classify(c);
        if (k == CharClass::Space || k == CharClass::Underscore) {
            ++i;
            continue;
        }
        std::size_t j = i;
        if (k == CharClass::Punct) {
            while (j < raw.size() && classify(static_cast<unsigned char>(raw[j])) == CharClass::Punct) ++j;
            out.emplace_back(raw.substr(i, j - i));
        } else {
            while (j < raw.size()) {
                const auto kj = classify(static_cast<unsigned char>(raw[j]));
                if (kj == CharClass::Punct || kj == CharClass::Space || kj == CharClass::Underscore) break;
                ++j;
            }
            split_segment(raw.substr(i, j - i), out);
        }
        i = j;
    }
    return out;
}

TokenSeq tokenize_code(std::string_view code) {
    TokenSeq out;
    std::size_t i = 0;
    while (i < code.size()) {
        const auto c = static_cast<unsigned char>(code[i]);
        const auto k = classify(c);
        if (k == CharClass::Space) {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        if (is_word_char(c)) {
            while (j < code.size() && is_word_char(static_cast<unsigned char>(code[j]))) ++j;
        }
        for (auto& sub : split_identifier(code.substr(i, j - i))) out.push_back(std::move(sub));
        i = j;
    }
    return out;
}

const std::vector<std::string>& reserved_tokens() {
    static const std::vector<std::string> tokens{"<PAD>", "<SOS>", "<EOS>", "<UNK>"};
    return tokens;
}

Vocab::Vocab() {
    for (const auto& t : reserved_tokens()) add(t);
}

void Vocab::add(std::string token) {
    index_.emplace(token, static_cast<int>(tokens_.size()));
    tokens_.push_back(std::move(token));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
    const auto& reserved = reserved_tokens();
    if (tokens.size() < reserved.size() || !std::equal(reserved.begin(), reserved.end(), tokens.begin())) {
        throw DataError("vocabulary must start with <PAD>, <SOS>, <EOS>, <UNK>");
    }
    Vocab v;
    for (std::size_t i = reserved.size(); i < tokens.size(); ++i) {
        if (tokens[i].empty() || v.contains(tokens[i])) {
            throw DataError("vocabulary entry " + std::to_string(i) + " is empty or duplicated");
        }
        v.add(std::move(tokens[i]));
    }
    return v;
}

int Vocab::encode(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::decode(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                        std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode_all(const TokenSeq& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(encode(t));
    return ids;
}

bool Vocab::contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << nlohmann::json(tokens_).dump() << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        nlohmann::json j;
        in >> j;
        return from_tokens(j.get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

Vocab build_vocab(const std::vector<TokenSeq>& corpus, std::size_t cap) {
    struct Entry {
        std::size_t count = 0;
        std::size_t first = 0;
    };
    std::unordered_map<std::string, Entry> freq;
    std::vector<std::string> order;
    const auto& reserved = reserved_tokens();
    for (const auto& seq : corpus) {
        for (const auto& t : seq) {
            if (std::find(reserved.begin(), reserved.end(), t) != reserved.end()) continue;
            auto [it, inserted] = freq.try_emplace(t, Entry{0, order.size()});
            if (inserted) order.push_back(t);
            ++it->second.count;
        }
    }
    std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
        return freq.at(a).count > freq.at(b).count;
    });
    if (order.size() > cap) order.resize(cap);

    std::vector<std::string> tokens = reserved;
    tokens.insert(tokens.end(), order.begin(), order.end());
    return Vocab::from_tokens(std::move(tokens));
}

std::vector<int> encode_summary(const TokenSeq& summary, const Vocab& vocab, std::size_t length) {
    if (length < 2) throw std::invalid_argument("summary length must be at least 2");
    std::vector<int> ids;
    ids.reserve(summary.size() + 2);
    ids.push_back(kSos);
    for (const auto& t : summary) ids.push_back(vocab.encode(t));
    ids.push_back(kEos);
    ids.resize(length, kPad);
    return ids;
}

namespace {

void fill_row(const std::vector<int>& ids, std::size_t row, Grid<int>& grid, Grid<std::uint8_t>& mask) {
    const auto n = std::min(ids.size(), grid.cols);
    for (std::size_t c = 0; c < n; ++c) {
        grid(row, c) = ids[c];
        mask(row, c) = ids[c] != kPad ? 1 : 0;
    }
}

} // namespace

Batch pad_batch(const std::vector<EncodedSample>& samples, std::size_t l_code, std::size_t l_ast, std::size_t l_sum) {
    if (samples.empty()) throw std::invalid_argument("pad_batch: empty sample list");
    if (l_code == 0 || l_ast == 0 || l_sum == 0) throw std::invalid_argument("pad_batch: zero length");
    const auto b = samples.size();
    Batch batch;
    batch.code_ids = Grid<int>(b, l_code, kPad);
    batch.code_mask = Grid<std::uint8_t>(b, l_code, 0);
    batch.ast_mask = Grid<std::uint8_t>(b, l_ast, 0);
    batch.summary_ids = Grid<int>(b, l_sum, kPad);
    batch.summary_mask = Grid<std::uint8_t>(b, l_sum, 0);
    for (std::size_t r = 0; r < b; ++r) {
        const auto& s = samples[r];
        fill_row(s.code_ids, r, batch.code_ids, batch.code_mask);
        fill_row(s.summary_ids, r, batch.summary_ids, batch.summary_mask);
        for (std::size_t c = 0; c < std::min(s.ast_nodes, l_ast); ++c) batch.ast_mask(r, c) = 1;
    }
    return batch;
}

namespace {

std::string require_string(const nlohmann::json& j, const char* key, std::size_t line) {
    if (!j.contains(key) || !j.at(key).is_string()) {
        throw DataError("line " + std::to_string(line) + ": missing string field \"" + key + "\"");
    }
    return j.at(key).get<std::string>();
}

} // namespace

std::vector<Sample> load_dataset(const std::filesystem::path& path, LoadStats* stats) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset " + path.string());
    LoadStats local;
    std::vector<Sample> out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++local.lines;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("line " + std::to_string(line) + ": " + e.what());
        }
        Sample s;
        s.id = j.contains("id") && j.at("id").is_number_integer() ? std::to_string(j.at("id").get<long long>())
                                                                    : require_string(j, "id", line);
        s.code = require_string(j, "code", line);
        s.summary = require_string(j, "summary", line);
        if (!j.contains("ast")) throw DataError("line " + std::to_string(line) + ": missing field \"ast\"");
        try {
            const auto& ja = j.at("ast");
            if (ja.is_string()) {
                auto p = std::filesystem::path(ja.get<std::string>());
                if (p.is_relative()) p = path.parent_path() / p;
                s.tree = std::make_shared<const ast::Ast>(ast::load_ast_file(p));
            } else {
                s.tree = std::make_shared<const ast::Ast>(ast::validate_ast(ast::parse_ast_record(ja)));
            }
        } catch (const ast::AstError& e) {
            throw DataError("line " + std::to_string(line) + " (id " + s.id + "): " + e.what());
        }
        if (tokenize_summary(s.summary).empty()) {
            ++local.dropped_empty_summary;
            continue;
        }
        if (tokenize_code(s.code).empty()) {
            ++local.dropped_empty_code;
            continue;
        }
        out.push_back(std::move(s));
    }
    local.kept = out.size();
    if (stats) *stats = local;
    return out;
}

Split split_dataset(std::vector<Sample> samples, double train_fraction, double valid_fraction, std::uint64_t seed) {
    if (train_fraction <= 0.0 || valid_fraction < 0.0 || train_fraction + valid_fraction > 1.0) {
        throw std::invalid_argument("split fractions must be positive and sum to at most 1");
    }
    Rng rng(seed);
    rng.shuffle(samples.begin(), samples.end());
    const auto n = samples.size();
    const auto n_train = static_cast<std::size_t>(static_cast<double>(n) * train_fraction);
    const auto n_valid = static_cast<std::size_t>(static_cast<double>(n) * valid_fraction);

    Split split;
    std::set<std::pair<std::string, std::string>> seen;
    for (std::size_t i = 0; i < n; ++i) {
        auto& s = samples[i];
        if (i < n_train) {
            seen.emplace(s.code, s.summary);
            split.train.push_back(std::move(s));
        } else if (seen.count({s.code, s.summary}) != 0) {
            continue;
        } else if (i < n_train + n_valid) {
            split.valid.push_back(std::move(s));
        } else {
            split.test.push_back(std::move(s));
        }
    }
    return split;
}

} // namespace mmf3::corpus
