#pragma once

#include <string>

namespace gainrag::prompts {

/// A template with "{passage}" and "{query}" placeholders. Rendering
/// replaces every occurrence of each placeholder.
struct PromptTemplate {
    std::string text;

    std::string render(const std::string& passage, const std::string& query) const;
    std::string render_query_only(const std::string& query) const;
};

/// Default template for answer generation. The passage slot is left empty
/// when generating without retrieved context.
const PromptTemplate& default_generation_template();

/// Default template for pseudo-passage generation. Instructs the model to
/// emit "N/A" when it has nothing reliable to contribute.
const PromptTemplate& default_pseudo_template();

} // namespace gainrag::prompts
