#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mmf3/corpus.hpp"
#include "mmf3/rng.hpp"

namespace mmf3::toy {

// A tiny Java-like expression language: single-return methods over a few
// parameters, with an AST in the interchange format and a template summary
// derived from the method name and expression.
corpus::Sample random_sample(Rng& rng, const std::string& id);

std::vector<corpus::Sample> generate(std::size_t count, std::uint64_t seed);

// Method whose leaf at AST position 3 matches the token at position 4.
corpus::Sample matching_example();

nlohmann::json to_json(const corpus::Sample& sample);
void write_dataset(const std::vector<corpus::Sample>& samples, const std::filesystem::path& path);

} // namespace mmf3::toy
