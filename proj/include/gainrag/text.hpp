#pragma once

#include <string>
#include <vector>

namespace gainrag::text {

/// Whitespace tokenization (the mock backend's tokenizer).
std::vector<std::string> whitespace_tokens(const std::string& s);

/// Index tokenization: lowercase, split on non-alphanumeric. Bytes >= 0x80
/// are kept as word characters so UTF-8 text survives intact.
std::vector<std::string> index_tokens(const std::string& s);

/// Trim ASCII whitespace from both ends.
std::string trim(const std::string& s);

/// ASCII lowercase.
std::string lower(const std::string& s);

/// Join tokens with single spaces.
std::string join(const std::vector<std::string>& tokens, const std::string& sep = " ");

/// True iff `needle` occurs in `haystack` as a contiguous run.
bool contains_subsequence(const std::vector<std::string>& haystack,
                          const std::vector<std::string>& needle);

} // namespace gainrag::text
