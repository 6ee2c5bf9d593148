#include "core/cleaning.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>

#include "core/util.hpp"

namespace dapt {

namespace {

bool is_ascii_alpha(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

std::string collapse_whitespace(std::string_view s) {
  return join(split_whitespace(s), " ");
}

bool tag_name_is(std::string_view text, size_t pos, std::string_view name) {
  if (pos + name.size() > text.size()) return false;
  for (size_t i = 0; i < name.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(text[pos + i])) != name[i]) {
      return false;
    }
  }
  // The name must end the tag word: "<style>" and "<style type=..>" match,
  // "<styleguide>" does not.
  if (pos + name.size() < text.size()) {
    char next = text[pos + name.size()];
    if (is_ascii_alpha(next) || (next >= '0' && next <= '9')) return false;
  }
  return true;
}

// Tags that delimit blocks of text. Stripping one yields a line break, so
// per-line rules (advertisement markers, character filtering) see each block
// separately; an ad block then never drags neighbouring paragraphs down with
// it.
constexpr std::string_view kBlockTags[] = {
    "article", "aside", "blockquote", "br",   "div",  "figcaption", "figure",
    "footer",  "h1",    "h2",         "h3",   "h4",   "h5",         "h6",
    "header",  "hr",    "li",         "main", "nav",  "ol",         "p",
    "pre",     "section", "table",    "tbody", "td",  "th",         "thead",
    "title",   "tr",    "ul",
};

bool is_block_tag(std::string_view text, size_t pos) {
  for (std::string_view name : kBlockTags) {
    if (tag_name_is(text, pos, name)) return true;
  }
  return false;
}

// Finds the end of "</name ...>" starting the search at `from`; returns
// npos when the closing tag is missing.
size_t find_closing_tag(std::string_view text, size_t from,
                        std::string_view name) {
  for (size_t i = from; i + 1 < text.size(); ++i) {
    if (text[i] == '<' && text[i + 1] == '/' && tag_name_is(text, i + 2, name)) {
      size_t gt = text.find('>', i);
      return gt == std::string_view::npos ? std::string_view::npos : gt + 1;
    }
  }
  return std::string_view::npos;
}

// Drops <script>/<style> elements with their contents and replaces every
// other <...> tag with a space. A '<' with no closing '>' is left alone for
// the character filter to deal with.
std::string strip_markup(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    // Only '<' followed by a letter, '/', or '!' opens a tag; "5 < 10" is
    // plain text.
    if (text[i] != '<' || i + 1 >= text.size() ||
        !(is_ascii_alpha(text[i + 1]) || text[i + 1] == '/' ||
          text[i + 1] == '!')) {
      out += text[i++];
      continue;
    }
    size_t inner = i + 1;
    if (inner < text.size() && text[inner] == '/') ++inner;
    bool container = tag_name_is(text, inner, "script") ||
                     tag_name_is(text, inner, "style");
    size_t gt = text.find('>', i);
    if (gt == std::string::npos) {
      out += text[i++];
      continue;
    }
    if (container && text[i + 1] != '/') {
      std::string_view name = tag_name_is(text, inner, "script") ? "script"
                                                                 : "style";
      size_t end = find_closing_tag(text, gt + 1, name);
      i = end == std::string_view::npos ? text.size() : end;
    } else {
      i = gt + 1;
    }
    out += is_block_tag(text, inner) ? '\n' : ' ';
  }
  return out;
}

struct NamedEntity {
  std::string_view name;
  std::string_view value;
};

constexpr NamedEntity kEntities[] = {
    {"amp", "&"},   {"lt", "<"},    {"gt", ">"},   {"quot", "\""},
    {"apos", "'"},  {"nbsp", " "},  {"ndash", "-"}, {"mdash", "-"},
    {"lsquo", "'"}, {"rsquo", "'"}, {"ldquo", "\""}, {"rdquo", "\""},
    {"hellip", "..."},
};

// Decodes named and numeric character references; anything unrecognized is
// copied through and left to the character filter.
std::string decode_entities(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '&') {
      out += text[i++];
      continue;
    }
    size_t semi = text.find(';', i + 1);
    if (semi == std::string::npos || semi - i > 10) {
      out += text[i++];
      continue;
    }
    std::string_view body(text.data() + i + 1, semi - i - 1);
    if (!body.empty() && body[0] == '#') {
      std::string_view digits = body.substr(1);
      int base = 10;
      if (!digits.empty() && (digits[0] == 'x' || digits[0] == 'X')) {
        digits = digits.substr(1);
        base = 16;
      }
      uint32_t cp = 0;
      bool ok = !digits.empty();
      for (char c : digits) {
        int d;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (base == 16 && c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else if (base == 16 && c >= 'A' && c <= 'F') d = c - 'A' + 10;
        else { ok = false; break; }
        cp = cp * static_cast<uint32_t>(base) + static_cast<uint32_t>(d);
        if (cp > 0x10FFFF) { ok = false; break; }
      }
      if (ok) {
        utf8_append(out, cp);
        i = semi + 1;
        continue;
      }
    } else {
      bool matched = false;
      for (const auto& e : kEntities) {
        if (body == e.name) {
          out += e.value;
          i = semi + 1;
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    out += text[i++];
  }
  return out;
}

// Maps typographic variants onto their plain-ASCII keep-list forms; returns
// 0 when the codepoint has no mapping.
uint32_t normalize_codepoint(uint32_t cp) {
  switch (cp) {
    case 0x2018: case 0x2019: case 0x201A: case 0x2032:
      return '\'';
    case 0x201C: case 0x201D: case 0x201E: case 0x2033:
      return '"';
    case 0x2010: case 0x2011: case 0x2013: case 0x2014: case 0x2212:
      return '-';
    default:
      return 0;
  }
}

bool keep_codepoint(uint32_t cp) {
  if (cp < 0x80) {
    char c = static_cast<char>(cp);
    if (std::isalnum(static_cast<unsigned char>(c))) return true;
    static constexpr std::string_view kPunct = ".,!?;:%()-\"'/$";
    return kPunct.find(c) != std::string_view::npos;
  }
  if (cp == 0x00A3 || cp == 0x00A5) return true;          // £ ¥
  if (cp >= 0x20A0 && cp <= 0x20CF) return true;          // currency block
  if (cp >= 0x00C0 && cp <= 0x024F) {
    return cp != 0x00D7 && cp != 0x00F7;                  // Latin letters
  }
  return false;
}

// Keep-list character filter: allowed codepoints pass, normalizable ones are
// rewritten, everything else becomes a space so removals never join words.
std::string filter_codepoints(std::string_view line) {
  std::string out;
  out.reserve(line.size());
  size_t pos = 0;
  while (pos < line.size()) {
    uint32_t cp = utf8_next(line, pos);
    if (cp == ' ' || cp == '\t' || cp == '\r') {
      out += ' ';
      continue;
    }
    uint32_t mapped = normalize_codepoint(cp);
    if (mapped != 0) cp = mapped;
    if (keep_codepoint(cp)) {
      utf8_append(out, cp);
    } else {
      out += ' ';
    }
  }
  return out;
}

bool is_url_token(std::string_view token) {
  return contains_ci(token, "http://") || contains_ci(token, "https://") ||
         starts_with_ci(token, "www.");
}

std::string remove_url_tokens(std::string_view line) {
  std::vector<std::string> kept;
  for (std::string& token : split_whitespace(line)) {
    if (!is_url_token(token)) kept.push_back(std::move(token));
  }
  return join(kept, " ");
}

bool is_ad_line(std::string_view line, const CleaningRules& rules) {
  std::string collapsed = collapse_whitespace(line);
  for (const std::string& marker : rules.ad_markers) {
    if (contains_ci(collapsed, marker)) return true;
  }
  return false;
}

std::string clean_once(const std::string& text, const CleaningRules& rules) {
  std::string decoded = decode_entities(strip_markup(text));
  std::vector<std::string> kept_lines;
  for (std::string_view line : split(decoded, '\n')) {
    // URLs go first, while still intact: the character filter would break
    // "banner?id=99" at the '=' and leave "99" behind as a stray token.
    std::string no_urls = remove_url_tokens(line);
    if (is_ad_line(no_urls, rules)) continue;
    std::string filtered = filter_codepoints(no_urls);
    if (trim(filtered).empty()) continue;
    kept_lines.push_back(std::move(filtered));
  }
  return collapse_whitespace(join(kept_lines, " "));
}

}  // namespace

std::string style_tag_name(StyleTag tag) {
  return tag == StyleTag::kMixed ? "mixed" : "formal";
}

StyleTag parse_style_tag(std::string_view name) {
  if (name == "mixed") return StyleTag::kMixed;
  if (name == "formal") return StyleTag::kFormal;
  throw ConfigError("parse_style_tag: unknown style '" + std::string(name) +
                    "' (expected 'mixed' or 'formal')");
}

CleaningRules CleaningRules::defaults() {
  CleaningRules rules;
  rules.ad_markers = {
      "ADVERTISEMENT",
      "Baca juga",
      "Lihat juga",
      "Simak video",
      "Scroll untuk melanjutkan",
      "Konten promosi",
  };
  rules.abbreviations = {
      "Rp.", "No.",  "PT.",  "Tbk.", "CV.",  "Dr.",  "Drs.", "Ir.",
      "Prof.", "Jl.", "Yth.", "a.n.", "dkk.", "dll.", "dsb.", "hal.",
      "Jend.", "Kec.", "Kab.",
  };
  return rules;
}

std::string clean_text(const std::string& text, const CleaningRules& rules) {
  // One stage can uncover work for an earlier one (an entity that decodes to
  // markup, a removed URL token that fuses the words around it into an ad
  // marker). Every stage only shrinks or preserves the text, so iterating to
  // a fixed point terminates and makes the cleaner idempotent outright.
  std::string out = clean_once(text, rules);
  while (true) {
    std::string again = clean_once(out, rules);
    if (again == out) return out;
    out = std::move(again);
  }
}

namespace {

bool is_sentence_opener(uint32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return true;
  if (cp >= '0' && cp <= '9') return true;
  return cp >= 0x00C0 && cp <= 0x00DE && cp != 0x00D7;  // accented uppercase
}

bool equals_ci(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i]))) {
      return false;
    }
  }
  return true;
}

// True when the token ending at the period (inclusive) is a known
// abbreviation or a single-letter initial like "H.".
bool guards_period(std::string_view text, size_t sentence_start,
                   size_t dot_pos, const CleaningRules& rules) {
  size_t tok_begin = dot_pos;
  while (tok_begin > sentence_start &&
         !std::isspace(static_cast<unsigned char>(text[tok_begin - 1]))) {
    --tok_begin;
  }
  std::string_view token = text.substr(tok_begin, dot_pos - tok_begin + 1);
  if (token.size() == 2 && is_ascii_alpha(token[0])) return true;
  for (const std::string& abbr : rules.abbreviations) {
    if (equals_ci(token, abbr)) return true;
  }
  return false;
}

void flush_sentence(std::string_view piece, const CleaningRules& rules,
                    std::vector<std::string>& out) {
  std::string trimmed = trim(piece);
  if (trimmed.empty()) return;
  if (count_whitespace_tokens(trimmed) < rules.min_sentence_words) return;
  out.push_back(std::move(trimmed));
}

}  // namespace

std::vector<std::string> split_sentences(const std::string& text,
                                         const CleaningRules& rules) {
  std::vector<std::string> out;
  std::string_view sv = text;
  size_t start = 0;
  size_t i = 0;
  while (i < sv.size()) {
    char c = sv[i];
    if (c != '.' && c != '!' && c != '?') {
      ++i;
      continue;
    }
    size_t run_end = i + 1;
    while (run_end < sv.size() && (sv[run_end] == '.' || sv[run_end] == '!' ||
                                   sv[run_end] == '?')) {
      ++run_end;
    }
    size_t next = run_end;
    while (next < sv.size() &&
           std::isspace(static_cast<unsigned char>(sv[next]))) {
      ++next;
    }
    size_t probe = next;
    bool boundary = next > run_end && next < sv.size() &&
                    is_sentence_opener(utf8_next(sv, probe));
    if (boundary && run_end - i == 1 && c == '.' &&
        guards_period(sv, start, i, rules)) {
      boundary = false;
    }
    if (boundary) {
      flush_sentence(sv.substr(start, run_end - start), rules, out);
      start = next;
      i = next;
    } else {
      i = run_end;
    }
  }
  flush_sentence(sv.substr(start), rules, out);
  return out;
}

CorpusStats corpus_stats(const std::vector<std::string>& sentences) {
  CorpusStats stats;
  stats.sentence_count = static_cast<int64_t>(sentences.size());
  for (const std::string& s : sentences) {
    stats.word_count += static_cast<int64_t>(count_whitespace_tokens(s));
    stats.byte_size += static_cast<int64_t>(s.size()) + 1;  // newline
  }
  return stats;
}

namespace {

std::string format_mb(int64_t bytes) {
  double mb = round_half_up(static_cast<double>(bytes) / 1e6, 3);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", mb);
  return buf;
}

}  // namespace

std::string render_stats_table(const std::vector<CorpusSection>& sections) {
  struct Row {
    std::string source, style, words, size;
  };
  std::vector<Row> rows;
  rows.push_back({"Source", "Style", "#Words", "Size (MB)"});
  CorpusStats total;
  for (const CorpusSection& sec : sections) {
    rows.push_back({sec.name, style_tag_name(sec.style),
                    with_thousands(sec.stats.word_count),
                    format_mb(sec.stats.byte_size)});
    total.word_count += sec.stats.word_count;
    total.byte_size += sec.stats.byte_size;
  }
  rows.push_back({"Total", "", with_thousands(total.word_count),
                  format_mb(total.byte_size)});

  size_t w0 = 0, w1 = 0, w2 = 0, w3 = 0;
  for (const Row& r : rows) {
    w0 = std::max(w0, r.source.size());
    w1 = std::max(w1, r.style.size());
    w2 = std::max(w2, r.words.size());
    w3 = std::max(w3, r.size.size());
  }
  std::ostringstream os;
  for (size_t ri = 0; ri < rows.size(); ++ri) {
    const Row& r = rows[ri];
    os << r.source << std::string(w0 - r.source.size(), ' ') << "  "
       << r.style << std::string(w1 - r.style.size(), ' ') << "  "
       << std::string(w2 - r.words.size(), ' ') << r.words << "  "
       << std::string(w3 - r.size.size(), ' ') << r.size << "\n";
    if (ri == 0) {
      os << std::string(w0, '-') << "  " << std::string(w1, '-') << "  "
         << std::string(w2, '-') << "  " << std::string(w3, '-') << "\n";
    }
  }
  return os.str();
}

}  // namespace dapt
