#pragma once

#include <string>

#include "json.hpp"
#include "kalm/text.hpp"

namespace kalm {

// Folds an optional "fields" object of a JSONL record into its text as
// key=value tokens. Keys come out sorted; non-string values are dumped as JSON.
inline std::string text_with_fields(const nlohmann::json& record) {
    std::string text = record.at("text").get<std::string>();
    const auto it = record.find("fields");
    if (it == record.end() || it->is_null()) return text;
    std::vector<std::pair<std::string, std::string>> fields;
    for (const auto& [key, value] : it->get<nlohmann::json::object_t>()) {
        fields.emplace_back(key, value.is_string() ? value.get<std::string>() : value.dump());
    }
    return append_fields(std::move(text), fields);
}

}  // namespace kalm
