#include "viood/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "viood/error.hpp"

namespace viood::text {

Vocabulary::Vocabulary() {
  push("[PAD]");
  push("[UNK]");
  push("[CLS]");
}

void Vocabulary::push(const std::string& tok) {
  token_to_id_.emplace(tok, static_cast<int>(id_to_token_.size()));
  id_to_token_.push_back(tok);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, int min_count) {
  // std::map keeps insertion order independent of hash seeds.
  std::map<std::string, long> counts;
  for (const auto& t : texts)
    for (const auto& tok : split_whitespace(t)) ++counts[tok];
  Vocabulary v;
  for (const auto& [tok, c] : counts)
    if (c >= min_count && !v.token_to_id_.count(tok)) v.push(tok);
  return v;
}

int Vocabulary::lookup(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw VocabError("token id " + std::to_string(id) + " out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](char c) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  };
  for (const auto& t : id_to_token_) {
    for (char c : t) mix(c);
    mix('\n');
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write vocabulary file: " + path);
  for (const auto& t : id_to_token_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot read vocabulary file: " + path);
  Vocabulary v;
  std::string line;
  int idx = 0;
  while (std::getline(in, line)) {
    if (idx < 3) {
      if (line != v.id_to_token_[static_cast<std::size_t>(idx)])
        throw VocabError("vocabulary file " + path + ": reserved token mismatch at line " +
                         std::to_string(idx + 1));
    } else {
      if (v.token_to_id_.count(line))
        throw VocabError("vocabulary file " + path + ": duplicate token '" + line + "'");
      v.push(line);
    }
    ++idx;
  }
  if (idx < 3) throw VocabError("vocabulary file " + path + ": missing reserved tokens");
  return v;
}

std::vector<std::string> split_whitespace(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab, int max_len) {
  if (max_len < 2) throw ContractError("tokenize: max_len must be >= 2");
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(max_len));
  ids.push_back(Vocabulary::kCls);
  for (const auto& tok : split_whitespace(text)) {
    if (static_cast<int>(ids.size()) >= max_len) break;
    ids.push_back(vocab.lookup(tok));
  }
  ids.resize(static_cast<std::size_t>(max_len), Vocabulary::kPad);
  return ids;
}

}  // namespace viood::text
