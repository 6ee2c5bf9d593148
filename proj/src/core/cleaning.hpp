#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dapt {

// Style of a raw source document: news articles are mixed-register prose,
// regulatory filings are formal.
enum class StyleTag { kMixed, kFormal };

std::string style_tag_name(StyleTag tag);
StyleTag parse_style_tag(std::string_view name);

struct RawDocument {
  std::string source_id;
  std::string body;  // plain text or HTML; must be non-empty
  StyleTag style = StyleTag::kMixed;
};

// Knobs for the text cleaner and sentence splitter. The defaults target
// Indonesian financial news and filings; both lists are plain data so a
// deployment can audit or extend them.
struct CleaningRules {
  // A line whose whitespace-collapsed form contains any of these
  // (case-insensitively) is dropped wholesale.
  std::vector<std::string> ad_markers;
  // Tokens ending in '.' that do not close a sentence.
  std::vector<std::string> abbreviations;
  // Sentences with fewer whitespace-delimited words than this are dropped.
  int min_sentence_words = 3;

  static CleaningRules defaults();
};

// Normalizes one document to a single line of text: strips markup, decodes
// HTML entities, drops advertisement lines, removes URL tokens, filters
// characters against an explicit keep-list, and collapses whitespace.
// Never fails; heavy boilerplate can legitimately clean to "".
// Idempotent: clean_text(clean_text(x)) == clean_text(x).
std::string clean_text(const std::string& text, const CleaningRules& rules);

inline std::string clean_document(const RawDocument& doc,
                                  const CleaningRules& rules) {
  return clean_text(doc.body, rules);
}

// Splits cleaned text into sentences at [.!?]+ followed by whitespace and an
// uppercase letter or digit, guarded by the abbreviation list. Sentences
// shorter than rules.min_sentence_words are dropped.
std::vector<std::string> split_sentences(const std::string& text,
                                         const CleaningRules& rules);

struct CorpusStats {
  int64_t word_count = 0;     // whitespace-delimited tokens
  int64_t byte_size = 0;      // size of the one-sentence-per-line file
  int64_t sentence_count = 0;
};

CorpusStats corpus_stats(const std::vector<std::string>& sentences);

// One named sub-corpus for the statistics table.
struct CorpusSection {
  std::string name;
  StyleTag style = StyleTag::kMixed;
  CorpusStats stats;
};

// Renders a plain-text table: Source | Style | #Words | Size (MB), one row
// per section plus a Total row. Word counts get thousands separators; sizes
// are decimal megabytes with three digits.
std::string render_stats_table(const std::vector<CorpusSection>& sections);

}  // namespace dapt
