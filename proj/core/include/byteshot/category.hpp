#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace byteshot {

/// The eight malware families used to label malicious samples.
enum class CategoryLabel { Adware, Backdoor, Botnet, Dropper, Ransomware, Rootkit, Spyware, Virus };

inline constexpr std::array<CategoryLabel, 8> kAllCategories = {
    CategoryLabel::Adware,     CategoryLabel::Backdoor, CategoryLabel::Botnet,
    CategoryLabel::Dropper,    CategoryLabel::Ransomware, CategoryLabel::Rootkit,
    CategoryLabel::Spyware,    CategoryLabel::Virus,
};

std::string_view to_string(CategoryLabel c) noexcept;
std::optional<CategoryLabel> parse_category(std::string_view name) noexcept;

}  // namespace byteshot
