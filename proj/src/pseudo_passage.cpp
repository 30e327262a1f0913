#include "gainrag/pseudo_passage.hpp"

#include "gainrag/rng.hpp"
#include "gainrag/text.hpp"

#include <stdexcept>

namespace gainrag::pseudo {

std::string pseudo_id(const std::string& question) {
    return "pseudo:" + rng::hex64(rng::fnv1a64(question));
}

std::optional<Passage> generate_pseudo(lm::LMBackend& backend, const std::string& question,
                                       int max_tokens, const prompts::PromptTemplate& tmpl) {
    if (question.empty()) {
        throw std::invalid_argument("generate_pseudo: empty question");
    }
    const std::string prompt = tmpl.render_query_only(question);
    const std::string response = backend.complete(prompt, max_tokens);

    const std::string trimmed = text::trim(response);
    if (trimmed.empty() || text::lower(trimmed) == "n/a") {
        return std::nullopt;
    }

    Passage passage;
    passage.id = pseudo_id(question);
    passage.text = trimmed;
    passage.origin = PassageOrigin::Pseudo;
    return passage;
}

} // namespace gainrag::pseudo
