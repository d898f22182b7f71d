#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "viood/vocab.hpp"

namespace viood::io {

struct Record {
  std::string text;
  int label = -1;  // -1 for OOD records
};

struct DatasetSpec {
  std::string id_train;
  std::string id_val;
  std::string id_test;
  std::vector<std::string> ood_test;
};

struct Corpus {
  std::vector<Record> id_train, id_val, id_test;
  std::vector<std::vector<Record>> ood_test;
  std::vector<std::string> ood_names;
  std::vector<std::string> label_names;  // sorted; index = class id
  text::Vocabulary vocab;               // built from id_train only

  int k_classes() const { return static_cast<int>(label_names.size()); }
};

// Line-delimited JSON records with fields text (string) and label (string;
// ignored for OOD files). Label ids follow sorted label strings.
Corpus load_dataset(const DatasetSpec& spec);

// Keyword-class ID task plus disjoint-vocabulary OOD texts; writes
// id_train.jsonl, id_val.jsonl, id_test.jsonl, ood_test.jsonl under dir.
DatasetSpec make_synthetic(const std::string& dir, std::uint64_t seed, int n_train = 2000,
                           int n_val = 500, int n_test = 500, int n_ood = 500);

}  // namespace viood::io
