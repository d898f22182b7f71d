#include "viood/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "viood/error.hpp"
#include "viood/rng.hpp"

namespace viood::io {

namespace {

std::vector<Record> read_jsonl(const std::string& path, bool need_label) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open dataset file: " + path);
  std::vector<Record> out;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IngestError(path + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string())
      throw IngestError(path + ":" + std::to_string(lineno) + ": record needs a string 'text'");
    if (need_label && (!j.contains("label") || !j["label"].is_string()))
      throw IngestError(path + ":" + std::to_string(lineno) + ": record needs a string 'label'");
    Record r;
    r.text = j["text"].get<std::string>();
    out.push_back(std::move(r));
  }
  if (out.empty()) throw IngestError("dataset file is empty: " + path);
  return out;
}

// Second pass keeping the raw label strings (only for ID files).
std::vector<std::string> read_labels(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    out.push_back(j["label"].get<std::string>());
  }
  return out;
}

void assign_labels(std::vector<Record>& recs, const std::vector<std::string>& raw,
                   const std::map<std::string, int>& mapping, const std::string& path) {
  for (std::size_t i = 0; i < recs.size(); ++i) {
    auto it = mapping.find(raw[i]);
    if (it == mapping.end())
      throw LabelError(path + ": label '" + raw[i] + "' not present in the training label set");
    recs[i].label = it->second;
  }
}

}  // namespace

Corpus load_dataset(const DatasetSpec& spec) {
  Corpus c;
  c.id_train = read_jsonl(spec.id_train, true);
  c.id_val = read_jsonl(spec.id_val, true);
  c.id_test = read_jsonl(spec.id_test, true);

  const auto train_raw = read_labels(spec.id_train);
  std::set<std::string> label_set(train_raw.begin(), train_raw.end());
  c.label_names.assign(label_set.begin(), label_set.end());  // sorted
  std::map<std::string, int> mapping;
  for (std::size_t i = 0; i < c.label_names.size(); ++i)
    mapping[c.label_names[i]] = static_cast<int>(i);

  assign_labels(c.id_train, train_raw, mapping, spec.id_train);
  assign_labels(c.id_val, read_labels(spec.id_val), mapping, spec.id_val);
  assign_labels(c.id_test, read_labels(spec.id_test), mapping, spec.id_test);

  for (const auto& path : spec.ood_test) {
    c.ood_test.push_back(read_jsonl(path, false));
    c.ood_names.push_back(std::filesystem::path(path).stem().string());
  }

  std::vector<std::string> train_texts;
  train_texts.reserve(c.id_train.size());
  for (const auto& r : c.id_train) train_texts.push_back(r.text);
  c.vocab = text::Vocabulary::build(train_texts);
  return c;
}

namespace {

const std::vector<std::string> kClass0 = {"ember",  "falcon", "granite", "harbor",
                                          "indigo", "juniper", "kestrel", "lantern"};
const std::vector<std::string> kClass1 = {"marble", "nectar", "orchid", "pepper",
                                          "quartz", "russet", "saffron", "thistle"};
const std::vector<std::string> kFiller = {
    "the",  "a",     "of",    "and",  "with", "near", "under", "over", "from", "into",
    "old",  "new",   "small", "tall", "warm", "cold", "quiet", "loud", "dark", "light",
    "road", "river", "field", "hill", "town", "wall", "door",  "roof", "path", "stone"};
const std::vector<std::string> kOodVocab = {
    "zephyr",  "umbra",   "vortex",  "wraith",  "xylem",   "yonder",  "zenith",  "abyss",
    "breccia", "cinder",  "drossel", "eventide","fathom",   "glimmer", "hollow",  "isthmus",
    "jetsam",  "knoll",   "loam",    "mirth",   "nimbus",  "osprey",  "pumice",  "quill",
    "rivulet", "sable",   "tundra",  "umlaut",  "verdant", "willow"};

std::string synth_sentence(Rng& rng, const std::vector<std::string>& keywords,
                           const std::vector<std::string>& filler) {
  const int n_kw = 2 + static_cast<int>(rng.below(3));    // 2..4 keywords
  const int n_fill = 4 + static_cast<int>(rng.below(5));  // 4..8 filler words
  std::vector<std::string> words;
  for (int i = 0; i < n_kw; ++i) words.push_back(keywords[rng.below(keywords.size())]);
  for (int i = 0; i < n_fill; ++i) words.push_back(filler[rng.below(filler.size())]);
  rng.shuffle(words);
  std::ostringstream os;
  for (std::size_t i = 0; i < words.size(); ++i) os << (i ? " " : "") << words[i];
  return os.str();
}

void write_id_file(const std::string& path, Rng& rng, int n) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write dataset file: " + path);
  for (int i = 0; i < n; ++i) {
    const bool cls1 = (i % 2) == 1;
    nlohmann::json j;
    j["text"] = synth_sentence(rng, cls1 ? kClass1 : kClass0, kFiller);
    j["label"] = cls1 ? "class_b" : "class_a";
    out << j.dump() << '\n';
  }
}

}  // namespace

DatasetSpec make_synthetic(const std::string& dir, std::uint64_t seed, int n_train, int n_val,
                           int n_test, int n_ood) {
  std::filesystem::create_directories(dir);
  Rng rng(seed);
  DatasetSpec spec;
  spec.id_train = dir + "/id_train.jsonl";
  spec.id_val = dir + "/id_val.jsonl";
  spec.id_test = dir + "/id_test.jsonl";
  spec.ood_test = {dir + "/ood_test.jsonl"};
  write_id_file(spec.id_train, rng, n_train);
  write_id_file(spec.id_val, rng, n_val);
  write_id_file(spec.id_test, rng, n_test);
  std::ofstream out(spec.ood_test[0]);
  if (!out) throw IngestError("cannot write dataset file: " + spec.ood_test[0]);
  for (int i = 0; i < n_ood; ++i) {
    nlohmann::json j;
    // OOD sentences draw only from a vocabulary disjoint from the ID corpus.
    j["text"] = synth_sentence(rng, kOodVocab, kOodVocab);
    out << j.dump() << '\n';
  }
  return spec;
}

}  // namespace viood::io
