#pragma once

// Typed access into parsed manifests. Every failure becomes an input_error
// that names the offending key path.

#include "lot/error.hpp"
#include "lot/geometry.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace lot::detail {

using json = nlohmann::json;

inline const json &require(const json &obj, const std::string &key, const std::string &ctx) {
    if (!obj.is_object()) throw input_error(ctx + ": expected a JSON object");
    auto it = obj.find(key);
    if (it == obj.end()) throw input_error(ctx + ": missing field '" + key + "'");
    return *it;
}

template <typename T>
T get_as(const json &value, const std::string &ctx) {
    try {
        return value.get<T>();
    } catch (const json::exception &e) {
        throw input_error(ctx + ": wrong type (" + e.what() + ")");
    }
}

template <typename T>
T field(const json &obj, const std::string &key, const std::string &ctx) {
    return get_as<T>(require(obj, key, ctx), ctx + "." + key);
}

template <typename T>
std::optional<T> optional_field(const json &obj, const std::string &key, const std::string &ctx) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    return get_as<T>(*it, ctx + "." + key);
}

inline interval interval_from(const json &value, const std::string &ctx) {
    if (!value.is_array() || value.size() != 2) throw input_error(ctx + ": expected [begin, end]");
    return {get_as<index_t>(value[0], ctx), get_as<index_t>(value[1], ctx)};
}

inline std::vector<interval> intervals_from(const json &value, const std::string &ctx) {
    if (!value.is_array()) throw input_error(ctx + ": expected a list of [begin, end] pairs");
    std::vector<interval> out;
    out.reserve(value.size());
    for (std::size_t i = 0; i < value.size(); ++i) {
        out.push_back(interval_from(value[i], ctx + "[" + std::to_string(i) + "]"));
    }
    return out;
}

inline json to_json(const interval &iv) { return json::array({iv.begin, iv.end}); }

inline json to_json(const std::vector<interval> &ivs) {
    json out = json::array();
    for (const auto &iv : ivs) out.push_back(to_json(iv));
    return out;
}

} // namespace lot::detail
