#pragma once

#include "gainrag/lm_backend.hpp"
#include "gainrag/prompts.hpp"
#include "gainrag/types.hpp"

#include <optional>
#include <string>

namespace gainrag::pseudo {

constexpr int kDefaultMaxTokens = 160; // roughly 100 words

/// Generates a passage from the model's internal knowledge. Returns absent
/// when the trimmed, case-normalized response equals "n/a" or is empty —
/// the model declining to contribute. The returned passage id is
/// "pseudo:<query-hash>" and its origin is Pseudo.
std::optional<Passage> generate_pseudo(
    lm::LMBackend& backend, const std::string& question,
    int max_tokens = kDefaultMaxTokens,
    const prompts::PromptTemplate& tmpl = prompts::default_pseudo_template());

/// The reserved id a pseudo passage for this question would carry.
std::string pseudo_id(const std::string& question);

} // namespace gainrag::pseudo
