#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lee {

/// Porter suffix-stripping stemmer, original 1980 rule set (no later
/// extensions, no short-word guard). Input must be lowercase ASCII.
std::string porter_stem(std::string_view word);

/// The classic 33-word English stopword list, sorted.
std::span<const std::string_view> stopwords();

bool is_stopword(std::string_view token);

/// Lowercase, split on non-alphanumerics, drop stopwords, Porter-stem.
std::vector<std::string> analyze_text(std::string_view text);

} // namespace lee
