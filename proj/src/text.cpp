#include "lee/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace lee {
namespace {

constexpr std::array<std::string_view, 33> kStopwords = {
    "a",    "an",   "and",   "are",   "as",    "at",   "be",   "but",  "by",
    "for",  "if",   "in",    "into",  "is",    "it",   "no",   "not",  "of",
    "on",   "or",   "such",  "that",  "the",   "their", "then", "there", "these",
    "they", "this", "to",    "was",   "will",  "with"};

// Consonant/vowel classification for one word. A 'y' is a consonant at
// the start of the word or after a vowel.
class Stemmer {
 public:
  explicit Stemmer(std::string word) : w_(std::move(word)) {}

  std::string run() {
    step1a();
    step1b();
    step1c();
    step2();
    step3();
    step4();
    step5a();
    step5b();
    return std::move(w_);
  }

 private:
  struct Rule {
    std::string_view suffix;
    std::string_view replacement;
    int min_measure;  // condition is measure(stem) > min_measure
  };

  static bool is_vowel_letter(char c) {
    return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
  }

  static bool consonant_at(std::string_view s, std::size_t i) {
    if (is_vowel_letter(s[i])) return false;
    if (s[i] == 'y') return i == 0 ? true : !consonant_at(s, i - 1);
    return true;
  }

  static int measure(std::string_view s) {
    int m = 0;
    bool prev_vowel = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      bool cons = consonant_at(s, i);
      if (cons && prev_vowel) ++m;
      prev_vowel = !cons;
    }
    return m;
  }

  static bool contains_vowel(std::string_view s) {
    for (std::size_t i = 0; i < s.size(); ++i)
      if (!consonant_at(s, i)) return true;
    return false;
  }

  static bool ends_double_consonant(std::string_view s) {
    auto n = s.size();
    return n >= 2 && s[n - 1] == s[n - 2] && consonant_at(s, n - 1);
  }

  static bool ends_cvc(std::string_view s) {
    auto n = s.size();
    if (n < 3) return false;
    char last = s[n - 1];
    return consonant_at(s, n - 3) && !consonant_at(s, n - 2) && consonant_at(s, n - 1) &&
           last != 'w' && last != 'x' && last != 'y';
  }

  bool ends_with(std::string_view suffix) const {
    return w_.size() >= suffix.size() &&
           std::string_view(w_).substr(w_.size() - suffix.size()) == suffix;
  }

  std::string_view stem_without(std::string_view suffix) const {
    return std::string_view(w_).substr(0, w_.size() - suffix.size());
  }

  void replace(std::string_view suffix, std::string_view replacement) {
    w_.resize(w_.size() - suffix.size());
    w_.append(replacement);
  }

  // First rule whose suffix matches decides; a failed condition stops the list.
  void apply(std::span<const Rule> rules) {
    for (const auto& r : rules) {
      if (!ends_with(r.suffix)) continue;
      if (measure(stem_without(r.suffix)) > r.min_measure) replace(r.suffix, r.replacement);
      return;
    }
  }

  void step1a() {
    if (ends_with("sses")) replace("sses", "ss");
    else if (ends_with("ies")) replace("ies", "i");
    else if (ends_with("ss")) return;
    else if (ends_with("s")) replace("s", "");
  }

  void step1b() {
    if (ends_with("eed")) {
      if (measure(stem_without("eed")) > 0) replace("eed", "ee");
      return;
    }
    bool stripped = false;
    for (std::string_view suffix : {std::string_view("ed"), std::string_view("ing")}) {
      if (ends_with(suffix) && contains_vowel(stem_without(suffix))) {
        replace(suffix, "");
        stripped = true;
        break;
      }
    }
    if (!stripped) return;

    if (ends_with("at")) replace("at", "ate");
    else if (ends_with("bl")) replace("bl", "ble");
    else if (ends_with("iz")) replace("iz", "ize");
    else if (ends_with_double_consonant_stem()) {
      char last = w_.back();
      if (last != 'l' && last != 's' && last != 'z') w_.pop_back();
    } else if (measure(w_) == 1 && ends_cvc(w_)) {
      w_.push_back('e');
    }
  }

  bool ends_with_double_consonant_stem() const { return ends_double_consonant(w_); }

  void step1c() {
    if (ends_with("y") && contains_vowel(stem_without("y"))) w_.back() = 'i';
  }

  void step2() {
    static constexpr std::array<Rule, 20> rules = {{
        {"ational", "ate", 0}, {"tional", "tion", 0}, {"enci", "ence", 0},
        {"anci", "ance", 0},   {"izer", "ize", 0},    {"abli", "able", 0},
        {"alli", "al", 0},     {"entli", "ent", 0},   {"eli", "e", 0},
        {"ousli", "ous", 0},   {"ization", "ize", 0}, {"ation", "ate", 0},
        {"ator", "ate", 0},    {"alism", "al", 0},    {"iveness", "ive", 0},
        {"fulness", "ful", 0}, {"ousness", "ous", 0}, {"aliti", "al", 0},
        {"iviti", "ive", 0},   {"biliti", "ble", 0},
    }};
    apply(rules);
  }

  void step3() {
    static constexpr std::array<Rule, 7> rules = {{
        {"icate", "ic", 0}, {"ative", "", 0}, {"alize", "al", 0}, {"iciti", "ic", 0},
        {"ical", "ic", 0},  {"ful", "", 0},   {"ness", "", 0},
    }};
    apply(rules);
  }

  void step4() {
    static constexpr std::array<std::string_view, 19> suffixes = {
        "al",  "ance", "ence", "er",  "ic",  "able", "ible", "ant", "ement", "ment",
        "ent", "ion",  "ou",   "ism", "ate", "iti",  "ous",  "ive", "ize"};
    for (auto suffix : suffixes) {
      if (!ends_with(suffix)) continue;
      auto stem = stem_without(suffix);
      bool ok = measure(stem) > 1;
      if (suffix == "ion") ok = ok && !stem.empty() && (stem.back() == 's' || stem.back() == 't');
      if (ok) replace(suffix, "");
      return;
    }
  }

  void step5a() {
    if (!ends_with("e")) return;
    auto stem = stem_without("e");
    int m = measure(stem);
    if (m > 1 || (m == 1 && !ends_cvc(stem))) w_.pop_back();
  }

  void step5b() {
    if (ends_with("ll") && measure(stem_without("l")) > 1) w_.pop_back();
  }

  std::string w_;
};

} // namespace

std::string porter_stem(std::string_view word) { return Stemmer(std::string(word)).run(); }

std::span<const std::string_view> stopwords() { return kStopwords; }

bool is_stopword(std::string_view token) {
  return std::binary_search(kStopwords.begin(), kStopwords.end(), token);
}

std::vector<std::string> analyze_text(std::string_view text) {
  std::vector<std::string> out;
  std::string token;
  auto flush = [&] {
    if (!token.empty() && !is_stopword(token)) out.push_back(porter_stem(token));
    token.clear();
  };
  for (char c : text) {
    auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) token.push_back(static_cast<char>(std::tolower(uc)));
    else flush();
  }
  flush();
  return out;
}

} // namespace lee
