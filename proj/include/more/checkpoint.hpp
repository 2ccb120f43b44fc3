#pragma once

// Adapter checkpoint document (JSON):
//   { "format_version": 1,
//     "config": { "n": .., "blocks": .., "block_rank": .. },
//     "factor_in": [ .. ], "factor_out": [ .. ], "seed": .. }

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "more/errors.hpp"
#include "more/monarch.hpp"

namespace more {

struct Checkpoint {
    MonarchAdapter adapter;
    std::uint64_t seed = 42;
};

inline constexpr int kFormatVersion = 1;

inline nlohmann::json checkpoint_to_json(const MonarchAdapter& a, std::uint64_t seed) {
    const auto& c = a.config();
    nlohmann::json j;
    j["format_version"] = kFormatVersion;
    j["config"] = {{"n", c.n()}, {"blocks", c.blocks()}, {"block_rank", c.block_rank()}};
    j["factor_in"] = std::vector<double>(a.factor_in().begin(), a.factor_in().end());
    j["factor_out"] = std::vector<double>(a.factor_out().begin(), a.factor_out().end());
    j["seed"] = seed;
    return j;
}

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& j, const char* name) {
    if (!j.is_object() || !j.contains(name)) throw StructuralError(std::string("checkpoint: missing field '") + name + "'");
    return j.at(name);
}

inline std::size_t require_count(const nlohmann::json& j, const char* name) {
    const auto& v = require_field(j, name);
    if (!v.is_number_unsigned()) {
        throw StructuralError(std::string("checkpoint: field '") + name + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

inline std::vector<double> require_array(const nlohmann::json& j, const char* name, std::size_t expected) {
    const auto& v = require_field(j, name);
    if (!v.is_array()) throw StructuralError(std::string("checkpoint: field '") + name + "' must be an array");
    if (v.size() != expected) {
        throw StructuralError(std::string("checkpoint: field '") + name + "' has length " + std::to_string(v.size()) +
                              ", expected " + std::to_string(expected));
    }
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& e : v) {
        if (!e.is_number()) throw StructuralError(std::string("checkpoint: field '") + name + "' holds a non-number");
        out.push_back(e.get<double>());
    }
    return out;
}

}  // namespace detail

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    if (detail::require_field(j, "format_version") != kFormatVersion) {
        throw StructuralError("checkpoint: unsupported format_version");
    }
    const auto& cj = detail::require_field(j, "config");
    const MonarchConfig config(detail::require_count(cj, "n"), detail::require_count(cj, "blocks"),
                               detail::require_count(cj, "block_rank"));
    auto fin = detail::require_array(j, "factor_in", config.factor_size());
    auto fout = detail::require_array(j, "factor_out", config.factor_size());
    std::uint64_t seed = 42;
    if (j.contains("seed")) seed = detail::require_count(j, "seed");
    return {MonarchAdapter(config, std::move(fin), std::move(fout)), seed};
}

inline void save_checkpoint(const std::string& path, const MonarchAdapter& a, std::uint64_t seed) {
    std::ofstream os(path);
    if (!os) throw StructuralError("checkpoint: cannot open '" + path + "' for writing");
    os << checkpoint_to_json(a, seed).dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw StructuralError("checkpoint: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw StructuralError(std::string("checkpoint: ") + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace more
