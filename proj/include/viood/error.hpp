#pragma once

#include <stdexcept>
#include <string>

namespace viood {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct ContractError : Error {
  using Error::Error;
};
struct VocabError : Error {
  using Error::Error;
};
struct FitError : Error {
  using Error::Error;
};
struct ScoreError : Error {
  using Error::Error;
};
struct MetricError : Error {
  using Error::Error;
};
struct IngestError : Error {
  using Error::Error;
};
struct LabelError : Error {
  using Error::Error;
};
struct CompatError : Error {
  using Error::Error;
};

}  // namespace viood
