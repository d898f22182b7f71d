#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace viood::text {

// Whitespace-token vocabulary with reserved ids [PAD]=0, [UNK]=1, [CLS]=2.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;

  Vocabulary();

  // Builds from a corpus, keeping tokens with count >= min_count.
  static Vocabulary build(const std::vector<std::string>& texts, int min_count = 1);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int lookup(const std::string& token) const;  // kUnk if absent
  const std::string& token(int id) const;

  // FNV-1a over newline-joined tokens, hex encoded.
  std::string hash() const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
  void push(const std::string& tok);
};

std::vector<std::string> split_whitespace(const std::string& text);

// [CLS] ++ token ids, truncated to max_len, padded with [PAD].
std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab, int max_len);

}  // namespace viood::text
