#pragma once

#include <json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace gainrag::jsonl {

using json = nlohmann::json;

/// Parses a JSON Lines file, invoking `fn(line_number, object)` for each
/// non-empty line. Line numbers are 1-based. Throws std::runtime_error with
/// the file and line number on parse failure or when a line is not a JSON
/// object.
void for_each(const std::string& path, const std::function<void(std::size_t, const json&)>& fn);

/// Reads all objects from a JSON Lines file.
std::vector<json> read_all(const std::string& path);

/// Writes one object per line. Overwrites the file.
void write_all(const std::string& path, const std::vector<json>& objects);

/// Appends one object as a line.
void append(const std::string& path, const json& object);

bool file_exists(const std::string& path);

/// Reads a whole file into a string; throws if the file cannot be opened.
std::string read_file(const std::string& path);

/// Writes a string to a file, overwriting.
void write_file(const std::string& path, const std::string& content);

} // namespace gainrag::jsonl
