#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "cfair/model.hpp"

namespace cfair {

using Json = nlohmann::json;

CausalModel model_from_json(const Json& doc);
Json model_to_json(const CausalModel& model);

CausalModel load_model(const std::filesystem::path& path);
/// Writes the model document; `extra` keys (e.g. "fit_meta") are merged in.
void save_model(const std::filesystem::path& path, const CausalModel& model, const Json& extra = Json::object());

Dataset parse_csv(const std::string& text);
std::string format_csv(const Dataset& data);
Dataset read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const Dataset& data);

/// Shortest text that round-trips to the same double.
std::string format_double(double value);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& doc);

}  // namespace cfair
