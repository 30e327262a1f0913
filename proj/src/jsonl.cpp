#include "gainrag/jsonl.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gainrag::jsonl {

void for_each(const std::string& path, const std::function<void(std::size_t, const json&)>& fn) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open file: " + path);
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error(path + " line " + std::to_string(line_no) +
                                     ": malformed JSON: " + e.what());
        }
        if (!obj.is_object()) {
            throw std::runtime_error(path + " line " + std::to_string(line_no) +
                                     ": expected a JSON object");
        }
        fn(line_no, obj);
    }
}

std::vector<json> read_all(const std::string& path) {
    std::vector<json> out;
    for_each(path, [&](std::size_t, const json& obj) { out.push_back(obj); });
    return out;
}

void write_all(const std::string& path, const std::vector<json>& objects) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write file: " + path);
    }
    for (const auto& obj : objects) {
        out << obj.dump() << "\n";
    }
}

void append(const std::string& path, const json& object) {
    std::ofstream out(path, std::ios::app);
    if (!out) {
        throw std::runtime_error("cannot write file: " + path);
    }
    out << object.dump() << "\n";
}

bool file_exists(const std::string& path) {
    std::ifstream in(path);
    return static_cast<bool>(in);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open file: " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write file: " + path);
    }
    out << content;
}

} // namespace gainrag::jsonl
