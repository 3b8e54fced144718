#pragma once

#include <stdexcept>
#include <string>

namespace gtsp {

// Input violates a documented rule (bad generator spec, bad config, bad instance).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed document; message carries line/field context.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke an operation's precondition (backward on non-scalar, empty baseline, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class FeasibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exact enumeration would exceed its budget.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gtsp
