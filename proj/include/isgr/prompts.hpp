#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace isgr {

enum class TemplateId { SpatialInit, Abstract, InteractionKnowledge, InteractionGraph, QaGeneration };

inline constexpr std::array<TemplateId, 5> kAllTemplates = {
    TemplateId::SpatialInit, TemplateId::Abstract, TemplateId::InteractionKnowledge,
    TemplateId::InteractionGraph, TemplateId::QaGeneration};

std::string_view to_string(TemplateId id);
TemplateId template_from_string(std::string_view s);

/// Prompt texts with `{name}` placeholders. Defaults are compiled in; a
/// directory of `<template_id>.txt` files can override any of them.
class TemplateSet {
public:
    TemplateSet();

    static TemplateSet load_dir(const std::filesystem::path& dir);

    const std::string& text(TemplateId id) const { return texts_.at(id); }
    void set_text(TemplateId id, std::string text) { texts_[id] = std::move(text); }

    /// Substitutes every `{name}` found in `vars`; unknown placeholders are left
    /// untouched.
    std::string render(TemplateId id, const std::map<std::string, std::string>& vars) const;

private:
    std::map<TemplateId, std::string> texts_;
};

std::string_view default_template_text(TemplateId id);

}  // namespace isgr
