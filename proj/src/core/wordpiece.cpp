#include "core/wordpiece.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "core/util.hpp"

namespace dapt {

namespace {

const char* kSpecials[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

struct WordEntry {
  std::vector<std::string> symbols;
  int64_t freq = 0;
};

std::string strip_continuation(const std::string& s) {
  if (s.rfind(Vocabulary::kContinuation, 0) == 0) return s.substr(2);
  return s;
}

}  // namespace

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? -1 : it->second;
}

WordPieceTrainResult train_wordpiece_traced(const std::vector<std::string>& corpus,
                                            int vocab_size, int min_frequency,
                                            bool lowercase) {
  // Word frequencies in first-seen order for deterministic iteration.
  std::vector<WordEntry> words;
  std::unordered_map<std::string, size_t> word_index;
  std::set<std::string> alphabet;  // ordered for deterministic vocab layout
  int64_t total_words = 0;
  for (const auto& sentence : corpus) {
    std::string line = lowercase ? to_lower_ascii(sentence) : sentence;
    for (const auto& word : split_whitespace(line)) {
      ++total_words;
      auto chars = utf8_chars(word);
      auto it = word_index.find(word);
      if (it == word_index.end()) {
        WordEntry entry;
        entry.freq = 1;
        for (size_t i = 0; i < chars.size(); ++i) {
          entry.symbols.push_back(i == 0 ? chars[i] : Vocabulary::kContinuation + chars[i]);
        }
        word_index.emplace(word, words.size());
        words.push_back(std::move(entry));
      } else {
        ++words[it->second].freq;
      }
      for (const auto& c : chars) alphabet.insert(c);
    }
  }
  if (total_words == 0) throw DataError("train_wordpiece: empty corpus");
  if (min_frequency < 1) {
    throw ConfigError("train_wordpiece: min_frequency must be >= 1, got " +
                      std::to_string(min_frequency));
  }

  WordPieceTrainResult result;
  Vocabulary& vocab = result.vocab;
  vocab.lowercase = lowercase;
  auto add_token = [&vocab](const std::string& t) {
    vocab.token_to_id.emplace(t, vocab.size());
    vocab.tokens.push_back(t);
  };
  for (const char* s : kSpecials) add_token(s);
  for (const auto& c : alphabet) add_token(c);
  for (const auto& c : alphabet) add_token(Vocabulary::kContinuation + c);

  if (vocab_size < vocab.size()) {
    throw ConfigError("train_wordpiece: vocab_size " + std::to_string(vocab_size) +
                      " below alphabet + specials (" + std::to_string(vocab.size()) + ")");
  }

  while (vocab.size() < vocab_size) {
    // Symbol and adjacent-pair counts, weighted by word frequency.
    std::map<std::string, int64_t> symbol_count;
    std::map<std::pair<std::string, std::string>, int64_t> pair_count;
    for (const auto& w : words) {
      for (size_t i = 0; i < w.symbols.size(); ++i) {
        symbol_count[w.symbols[i]] += w.freq;
        if (i + 1 < w.symbols.size()) {
          pair_count[{w.symbols[i], w.symbols[i + 1]}] += w.freq;
        }
      }
    }

    bool found = false;
    std::pair<std::string, std::string> best;
    double best_score = 0.0;
    for (const auto& [pair, count] : pair_count) {
      if (count < min_frequency) continue;
      double score = static_cast<double>(count) /
                     (static_cast<double>(symbol_count[pair.first]) *
                      static_cast<double>(symbol_count[pair.second]));
      // std::map iteration is lexicographic, so strictly-greater keeps the
      // lexicographically smallest pair on ties.
      if (!found || score > best_score) {
        found = true;
        best = pair;
        best_score = score;
      }
    }
    if (!found) break;

    // Distinct merge paths can produce an existing token string; the merge
    // still applies to the word table, only the vocabulary entry is skipped.
    std::string merged = best.first + strip_continuation(best.second);
    if (!vocab.token_to_id.count(merged)) add_token(merged);
    result.merges.push_back(best);
    for (auto& w : words) {
      std::vector<std::string> next;
      next.reserve(w.symbols.size());
      size_t i = 0;
      while (i < w.symbols.size()) {
        if (i + 1 < w.symbols.size() && w.symbols[i] == best.first &&
            w.symbols[i + 1] == best.second) {
          next.push_back(merged);
          i += 2;
        } else {
          next.push_back(w.symbols[i]);
          ++i;
        }
      }
      w.symbols = std::move(next);
    }
  }
  return result;
}

Vocabulary train_wordpiece(const std::vector<std::string>& corpus, int vocab_size,
                           int min_frequency, bool lowercase) {
  return train_wordpiece_traced(corpus, vocab_size, min_frequency, lowercase).vocab;
}

namespace {

// Greedy longest-match-first segmentation of one word; empty result means the
// word cannot be covered and maps to [UNK].
std::vector<int> segment_word(const Vocabulary& vocab, const std::string& word) {
  auto chars = utf8_chars(word);
  std::vector<int> pieces;
  size_t start = 0;
  while (start < chars.size()) {
    int match = -1;
    size_t match_end = start;
    std::string candidate = start == 0 ? "" : Vocabulary::kContinuation;
    // Build candidates incrementally, keep the longest hit.
    for (size_t end = start; end < chars.size(); ++end) {
      candidate += chars[end];
      int id = vocab.id_of(candidate);
      if (id >= 0 && !vocab.is_special(id)) {
        match = id;
        match_end = end + 1;
      }
    }
    if (match < 0) return {};
    pieces.push_back(match);
    start = match_end;
  }
  return pieces;
}

}  // namespace

TokenSequence encode(const Vocabulary& vocab, std::string_view text, int max_len) {
  if (max_len < 3) {
    throw ConfigError("encode: max_len must be >= 3, got " + std::to_string(max_len));
  }
  std::string prepared = vocab.lowercase ? to_lower_ascii(text) : std::string(text);
  std::vector<int> content;
  for (const auto& word : split_whitespace(prepared)) {
    auto pieces = segment_word(vocab, word);
    if (pieces.empty()) {
      content.push_back(Vocabulary::kUnk);
    } else {
      content.insert(content.end(), pieces.begin(), pieces.end());
    }
  }
  if (static_cast<int>(content.size()) > max_len - 2) {
    content.resize(static_cast<size_t>(max_len - 2));
  }

  TokenSequence seq;
  seq.ids.reserve(static_cast<size_t>(max_len));
  seq.ids.push_back(Vocabulary::kCls);
  seq.ids.insert(seq.ids.end(), content.begin(), content.end());
  seq.ids.push_back(Vocabulary::kSep);
  seq.length = static_cast<int>(seq.ids.size());
  seq.ids.resize(static_cast<size_t>(max_len), Vocabulary::kPad);
  seq.attention_mask.assign(static_cast<size_t>(max_len), 0);
  for (int i = 0; i < seq.length; ++i) seq.attention_mask[static_cast<size_t>(i)] = 1;
  return seq;
}

std::string decode(const Vocabulary& vocab, const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= vocab.size()) {
      throw DataError("decode: unknown token id " + std::to_string(id));
    }
    if (vocab.is_special(id)) continue;
    const std::string& tok = vocab.tokens[static_cast<size_t>(id)];
    if (tok.rfind(Vocabulary::kContinuation, 0) == 0) {
      out += tok.substr(2);
    } else {
      if (!out.empty()) out += ' ';
      out += tok;
    }
  }
  return out;
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  write_lines(path, vocab.tokens);
}

Vocabulary load_vocabulary(const std::string& path) {
  Vocabulary vocab;
  auto lines = read_lines(path);
  if (lines.size() < 5) {
    throw DataError("vocabulary file too short: " + path);
  }
  for (int i = 0; i < 5; ++i) {
    if (lines[static_cast<size_t>(i)] != kSpecials[i]) {
      throw DataError("vocabulary file " + path + ": line " + std::to_string(i) +
                      " must be " + kSpecials[i] + ", got '" + lines[static_cast<size_t>(i)] + "'");
    }
  }
  for (auto& line : lines) {
    if (vocab.token_to_id.count(line)) {
      throw DataError("vocabulary file " + path + ": duplicate token '" + line + "'");
    }
    vocab.token_to_id.emplace(line, vocab.size());
    vocab.tokens.push_back(std::move(line));
  }
  return vocab;
}

}  // namespace dapt
