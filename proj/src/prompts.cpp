#include "isgr/prompts.hpp"

#include "isgr/error.hpp"

#include <fstream>
#include <sstream>

namespace isgr {

std::string_view to_string(TemplateId id) {
    switch (id) {
        case TemplateId::SpatialInit: return "spatial_init";
        case TemplateId::Abstract: return "abstract";
        case TemplateId::InteractionKnowledge: return "interaction_knowledge";
        case TemplateId::InteractionGraph: return "interaction_graph";
        case TemplateId::QaGeneration: return "qa_generation";
    }
    return "spatial_init";
}

TemplateId template_from_string(std::string_view s) {
    for (auto id : kAllTemplates) {
        if (to_string(id) == s) return id;
    }
    throw Error(ErrorCode::InvalidConfig, "unknown template id '" + std::string(s) + "'");
}

namespace {

constexpr std::string_view kSpatialInit =
    R"(You are an AI assistant. Generate a spatial scene graph identifying objects and their spatial relationships in the given image.

Use the format of relationship triples: <subject, relation, object>.

Example Output:
- <person, on, chair>
- <table, next to, chair>

Input: {image}
Output:
)";

constexpr std::string_view kAbstract =
    R"(You are an AI assistant. Based on the given spatial scene graph, create an abstract version of the graph that focuses only on elements relevant to the core scene described in the image.

Your task:
- Filter out less important or background elements.
- Keep only the essential objects and their spatial relationships that define the main activity or layout of the scene.
- Ensure all entities are clearly named and unambiguous.

Format:
- <subject, relation, object>
- Example: <person, sitting on, chair>

Input: {spatial_scene_graph}, {image}

Output:
)";

constexpr std::string_view kInteractionKnowledge =
    R"(You are an AI assistant. Using the abstract graph, identify all interactions between entities that are relevant to the core scene depicted in the image.

Your task:
- Analyze the abstract graph to extract meaningful interactions.
- For each interaction, specify the subject, action, and object.
- Ensure that all entities are clearly defined and unambiguous.

Format:
- <subject, action, object>
- Example: <player in blue, passing, football>
Input: {abstract_graph}, {image}

Output:
)";

constexpr std::string_view kInteractionGraph =
    R"(You are an AI assistant. Using the interaction knowledge, further abstract the scene by identifying the most relevant interactions for the core scene depicted in the image.

Your task:
- Focus on the essential interactions that define the dynamics of the scene.
- For each interaction, specify the subject, action, and object.
- Ensure clarity by adhering to the saliency, grounding, and consistency constraints.

Format:
- <subject, action, object>
- Example: <goalkeeper, catching, ball>
Input: {interaction_knowledge}, {image}

Output:
)";

constexpr std::string_view kQaGeneration =
    R"(You are an AI assistant, and you are seeing a single scene graph relationships. The scene graph describes relationships between objects with their bounding box coordinates.

Given these relationships {relationship_triples}

Create 4 natural QA pairs about these relationships. You can:

1. Q: What is the relationship between object1[bbox] and object2[bbox]?
A: object1 relation object2.

2. Q: What does object1[bbox] relation?
A: object1 relation object2[bbox].

3. Q: What is relation by object2[bbox]?
A: object1[bbox] relation object2.

4. Q: What objects have a relationship with object1[bbox]?
A: object1 relation1 object2[bbox], relation2 object3[bbox], etc.

When creating questions:

- Focus on the main subject as provided in the scene graph

- Include bounding box coordinates in the question for specific object identification

- In the answer, only include bounding box coordinates for objects that weren't specified with coordinates in the question

- Use the exact relationship and object names as provided in the scene graph

- Only ask questions that can be definitively answered using the provided scene graph information

Provide clear and precise answers that directly reflect the relationships shown in the scene graph. Each answer should be specific and correspond exactly to the information available in the scene graph data.

Input: {interaction_graph}, {image}

Output:
)";

}  // namespace

std::string_view default_template_text(TemplateId id) {
    switch (id) {
        case TemplateId::SpatialInit: return kSpatialInit;
        case TemplateId::Abstract: return kAbstract;
        case TemplateId::InteractionKnowledge: return kInteractionKnowledge;
        case TemplateId::InteractionGraph: return kInteractionGraph;
        case TemplateId::QaGeneration: return kQaGeneration;
    }
    return kSpatialInit;
}

TemplateSet::TemplateSet() {
    for (auto id : kAllTemplates) texts_[id] = std::string(default_template_text(id));
}

TemplateSet TemplateSet::load_dir(const std::filesystem::path& dir) {
    TemplateSet set;
    if (!std::filesystem::is_directory(dir)) {
        throw Error(ErrorCode::InvalidConfig, "template directory not found: " + dir.string());
    }
    for (auto id : kAllTemplates) {
        auto file = dir / (std::string(to_string(id)) + ".txt");
        if (!std::filesystem::exists(file)) continue;
        std::ifstream in(file, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        set.set_text(id, ss.str());
    }
    return set;
}

std::string TemplateSet::render(TemplateId id, const std::map<std::string, std::string>& vars) const {
    const std::string& tpl = text(id);
    std::string out;
    out.reserve(tpl.size());
    std::size_t pos = 0;
    while (pos < tpl.size()) {
        auto open = tpl.find('{', pos);
        if (open == std::string::npos) {
            out.append(tpl, pos, std::string::npos);
            break;
        }
        auto close = tpl.find('}', open);
        if (close == std::string::npos) {
            out.append(tpl, pos, std::string::npos);
            break;
        }
        out.append(tpl, pos, open - pos);
        auto it = vars.find(tpl.substr(open + 1, close - open - 1));
        if (it != vars.end()) {
            out.append(it->second);
        } else {
            out.append(tpl, open, close - open + 1);
        }
        pos = close + 1;
    }
    return out;
}

}  // namespace isgr
