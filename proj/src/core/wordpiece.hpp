#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dapt {

// WordPiece vocabulary with fixed special ids and "##" continuation marking.
// Immutable after training; encode/decode are pure.
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr const char* kContinuation = "##";

  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> token_to_id;
  bool lowercase = true;  // runtime knob, not part of the vocabulary file

  int size() const { return static_cast<int>(tokens.size()); }
  int id_of(const std::string& token) const;  // -1 if absent
  bool is_special(int id) const { return id >= 0 && id <= kMask; }
};

struct TokenSequence {
  std::vector<int> ids;
  std::vector<uint8_t> attention_mask;
  int length = 0;  // content pieces + [CLS] + [SEP]
};

struct WordPieceTrainResult {
  Vocabulary vocab;
  // Merge trace in order: (left symbol, right symbol) for each learned merge.
  std::vector<std::pair<std::string, std::string>> merges;
};

// Trains by greedy pair merging with likelihood scoring
// score(a,b) = count(ab) / (count(a) * count(b)); merging stops when the
// vocabulary is full or no pair reaches min_frequency. Ties break to the
// lexicographically smallest (left, right) pair. Deterministic in corpus
// order. The initial vocabulary holds the 5 specials plus both the
// word-initial and continuation form of every observed character.
WordPieceTrainResult train_wordpiece_traced(const std::vector<std::string>& corpus,
                                            int vocab_size, int min_frequency,
                                            bool lowercase = true);
Vocabulary train_wordpiece(const std::vector<std::string>& corpus, int vocab_size,
                           int min_frequency, bool lowercase = true);

// Whitespace pre-split, greedy longest-match-first segmentation, [CLS]/[SEP]
// framing, truncation to max_len - 2 content pieces, [PAD] fill. A word that
// cannot be fully segmented becomes a single [UNK].
TokenSequence encode(const Vocabulary& vocab, std::string_view text, int max_len);

// Drops special tokens, joins "##" continuations, separates words by spaces.
std::string decode(const Vocabulary& vocab, const std::vector<int>& ids);

/// Vocabulary file: one token per line, line number = id, specials on lines 0-4.
void save_vocabulary(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocabulary(const std::string& path);

}  // namespace dapt
