#pragma once

// JSON config documents for training runs and sweeps.
//
// A document is merged over the defaults, so every field is optional. Keys
// that the defaults do not know are rejected, and `key.path=value`
// overrides must match the type of the field they replace.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "more/errors.hpp"
#include "more/harness.hpp"
#include "more/projection.hpp"

namespace more {

using nlohmann::json;

inline json train_config_to_json(const TrainConfig& c) {
    return {
        {"format_version", 1},
        {"task", to_string(c.task)},
        {"n", c.n},
        {"target", {{"blocks", c.target.blocks}, {"block_rank", c.target.block_rank}, {"rank", c.target.rank},
                    {"scale", c.target.scale}}},
        {"adapter", {{"kind", to_string(c.adapter.kind)}, {"blocks", c.adapter.blocks},
                     {"block_rank", c.adapter.block_rank}, {"rank", c.adapter.rank},
                     {"init", c.adapter.init == InitMode::zero_out ? "zero_out" : "projection"}}},
        {"optimizer", {{"kind", "adam"}, {"lr", c.optimizer.lr}, {"beta1", c.optimizer.beta1},
                       {"beta2", c.optimizer.beta2}, {"eps", c.optimizer.eps}, {"cosine", c.optimizer.cosine}}},
        {"steps", c.steps},
        {"batch", c.batch},
        {"samples", c.samples},
        {"classes", c.classes},
        {"seed", c.seed},
        {"record_wall_time", c.record_wall_time},
    };
}

namespace detail {

inline void reject_unknown_keys(const json& doc, const json& schema, const std::string& prefix) {
    if (!doc.is_object()) return;
    for (const auto& [key, value] : doc.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!schema.contains(key)) throw StructuralError("config: unknown field '" + path + "'");
        if (schema.at(key).is_object()) {
            if (!value.is_object()) throw StructuralError("config: field '" + path + "' must be an object");
            reject_unknown_keys(value, schema.at(key), path);
        }
    }
}

inline bool same_kind(const json& a, const json& b) {
    if (a.is_number_integer() || a.is_number_unsigned()) return b.is_number_integer() || b.is_number_unsigned();
    if (a.is_number_float()) return b.is_number();
    return a.type() == b.type();
}

inline void check_types(const json& doc, const json& schema, const std::string& prefix) {
    for (const auto& [key, value] : schema.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        const json& got = doc.at(key);
        if (value.is_object()) {
            check_types(got, value, path);
        } else if (!same_kind(value, got)) {
            throw StructuralError("config: field '" + path + "' has the wrong type (expected " +
                                  std::string(value.type_name()) + ")");
        }
        if ((value.is_number_unsigned() || value.is_number_integer()) && got.is_number_integer() &&
            got.get<std::int64_t>() < 0) {
            throw StructuralError("config: field '" + path + "' must be non-negative");
        }
    }
}

template <typename E>
E parse_enum(const json& v, const std::string& field, std::initializer_list<std::pair<const char*, E>> options) {
    const auto s = v.get<std::string>();
    for (const auto& [name, value] : options)
        if (s == name) return value;
    throw StructuralError("config: field '" + field + "' has unknown value '" + s + "'");
}

}  // namespace detail

// Replaces the value at a dotted path; "adapter.blocks=8".
inline void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw StructuralError("override '" + assignment + "' is not key=value");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(key)) throw StructuralError("override: unknown field '" + path + "'");
        node = &(*node)[key];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    json parsed;
    if (node->is_string()) {
        parsed = raw;
    } else {
        try {
            parsed = json::parse(raw);
        } catch (const json::parse_error&) {
            throw StructuralError("override: cannot parse value for '" + path + "'");
        }
        if (!detail::same_kind(*node, parsed)) throw StructuralError("override: wrong type for '" + path + "'");
    }
    if (node->is_object()) throw StructuralError("override: '" + path + "' is an object");
    *node = parsed;
}

// Defaults merged with `doc`, then overrides, then type checks.
inline json resolve_train_document(const json& doc, const std::vector<std::string>& overrides = {}) {
    const json schema = train_config_to_json(TrainConfig{});
    if (!doc.is_object()) throw StructuralError("config: document must be an object");
    detail::reject_unknown_keys(doc, schema, "");
    json effective = schema;
    effective.merge_patch(doc);
    for (const auto& o : overrides) apply_override(effective, o);
    detail::check_types(effective, schema, "");
    if (effective.at("format_version") != 1) throw StructuralError("config: unsupported format_version");
    return effective;
}

inline TrainConfig train_config_from_json(const json& doc, const std::vector<std::string>& overrides = {}) {
    const json j = resolve_train_document(doc, overrides);
    TrainConfig c;
    c.task = detail::parse_enum<TaskKind>(j["task"], "task",
                                          {{"planted_monarch", TaskKind::planted_monarch},
                                           {"planted_lowrank", TaskKind::planted_lowrank},
                                           {"mlp_shift", TaskKind::mlp_shift}});
    c.n = j["n"].get<std::size_t>();
    c.target.blocks = j["target"]["blocks"].get<std::size_t>();
    c.target.block_rank = j["target"]["block_rank"].get<std::size_t>();
    c.target.rank = j["target"]["rank"].get<std::size_t>();
    c.target.scale = j["target"]["scale"].get<double>();
    c.adapter.kind = detail::parse_enum<AdapterKind>(j["adapter"]["kind"], "adapter.kind",
                                                     {{"more", AdapterKind::more}, {"lora", AdapterKind::lora}});
    c.adapter.blocks = j["adapter"]["blocks"].get<std::size_t>();
    c.adapter.block_rank = j["adapter"]["block_rank"].get<std::size_t>();
    c.adapter.rank = j["adapter"]["rank"].get<std::size_t>();
    c.adapter.init = detail::parse_enum<InitMode>(j["adapter"]["init"], "adapter.init",
                                                  {{"zero_out", InitMode::zero_out}, {"projection", InitMode::projection}});
    detail::parse_enum<int>(j["optimizer"]["kind"], "optimizer.kind", {{"adam", 0}});
    c.optimizer.lr = j["optimizer"]["lr"].get<double>();
    c.optimizer.beta1 = j["optimizer"]["beta1"].get<double>();
    c.optimizer.beta2 = j["optimizer"]["beta2"].get<double>();
    c.optimizer.eps = j["optimizer"]["eps"].get<double>();
    c.optimizer.cosine = j["optimizer"]["cosine"].get<bool>();
    c.steps = j["steps"].get<std::size_t>();
    c.batch = j["batch"].get<std::size_t>();
    c.samples = j["samples"].get<std::size_t>();
    c.classes = j["classes"].get<std::size_t>();
    c.seed = j["seed"].get<std::uint64_t>();
    c.record_wall_time = j["record_wall_time"].get<bool>();
    c.validate();
    return c;
}

struct SweepConfig {
    TrainConfig base;
    SweepGrid grid;
};

// { "format_version": 1, "base": { train document }, "grid": { "blocks": [..],
//   "block_ranks": [..], "lora_ranks": [..], "square_blocks": false } }
// Overrides address the base document ("adapter.init=projection").
inline SweepConfig sweep_config_from_json(const json& doc, const std::vector<std::string>& overrides = {}) {
    if (!doc.is_object()) throw StructuralError("config: document must be an object");
    for (const auto& [key, value] : doc.items()) {
        if (key != "format_version" && key != "base" && key != "grid") {
            throw StructuralError("config: unknown field '" + key + "'");
        }
    }
    if (doc.contains("format_version") && doc.at("format_version") != 1) {
        throw StructuralError("config: unsupported format_version");
    }
    SweepConfig sc;
    sc.base = train_config_from_json(doc.value("base", json::object()), overrides);
    if (!doc.contains("grid") || !doc.at("grid").is_object()) throw StructuralError("config: missing object 'grid'");
    const json& g = doc.at("grid");
    for (const auto& [key, value] : g.items()) {
        if (key != "blocks" && key != "block_ranks" && key != "lora_ranks" && key != "square_blocks") {
            throw StructuralError("config: unknown field 'grid." + key + "'");
        }
    }
    auto counts = [&](const char* key) {
        std::vector<std::size_t> out;
        if (!g.contains(key)) return out;
        if (!g.at(key).is_array()) throw StructuralError(std::string("config: 'grid.") + key + "' must be an array");
        for (const auto& v : g.at(key)) {
            if (!v.is_number_unsigned()) {
                throw StructuralError(std::string("config: 'grid.") + key + "' must hold non-negative integers");
            }
            out.push_back(v.get<std::size_t>());
        }
        return out;
    };
    sc.grid.blocks = counts("blocks");
    sc.grid.block_ranks = counts("block_ranks");
    sc.grid.lora_ranks = counts("lora_ranks");
    if (g.contains("square_blocks")) {
        if (!g.at("square_blocks").is_boolean()) throw StructuralError("config: 'grid.square_blocks' must be a boolean");
        sc.grid.square_blocks = g.at("square_blocks").get<bool>();
    }
    return sc;
}

inline json load_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw StructuralError("cannot open '" + path + "'");
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw StructuralError("'" + path + "': " + e.what());
    }
}

}  // namespace more
