#ifndef TEMA_COMMON_H_
#define TEMA_COMMON_H_

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tema {

// Row-major so that a row of an item table is a contiguous vector.
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Runtime failure inside a pipeline stage (malformed input, numeric blowup).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or command-line usage. Maps to exit status 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class Domain : std::uint8_t { kX = 0, kY = 1 };

inline int DomainIndex(Domain d) { return static_cast<int>(d); }
inline Domain OtherDomain(Domain d) {
  return d == Domain::kX ? Domain::kY : Domain::kX;
}

// The two domain labels of a dataset, e.g. {"food", "kitchen"}.
struct DomainPair {
  std::string x;
  std::string y;

  const std::string& Name(Domain d) const { return d == Domain::kX ? x : y; }
  // Throws Error naming the token when it matches neither label.
  Domain Resolve(const std::string& token) const;
};

}  // namespace tema

#endif  // TEMA_COMMON_H_
