#include "gainrag/prompts.hpp"

namespace gainrag::prompts {

namespace {

void replace_all(std::string& s, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

} // namespace

std::string PromptTemplate::render(const std::string& passage, const std::string& query) const {
    std::string out = text;
    replace_all(out, "{passage}", passage);
    replace_all(out, "{query}", query);
    return out;
}

std::string PromptTemplate::render_query_only(const std::string& query) const {
    std::string out = text;
    replace_all(out, "{query}", query);
    return out;
}

const PromptTemplate& default_generation_template() {
    static const PromptTemplate tmpl{
        "{passage}\n### Instruction:\nAnswer the question below concisely in a few words.\n\n"
        "### Input:\n{query}"};
    return tmpl;
}

const PromptTemplate& default_pseudo_template() {
    static const PromptTemplate tmpl{
        "Please provide background for the question below in 100 words. Do not respond with "
        "anything other than background. If you do not know or are unsure, please generate "
        "\"N/A\" directly. Question: {query}"};
    return tmpl;
}

} // namespace gainrag::prompts
