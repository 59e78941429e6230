#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dqfl {

/// Invalid configuration: bad model spec, infeasible data split, unknown key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (dimension mismatch etc.).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Base for failures caused by non-finite numbers during a run.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergedClientError : public DivergenceError {
 public:
  DivergedClientError(std::size_t round, std::size_t client_id, const std::string& what)
      : DivergenceError("client " + std::to_string(client_id) + " diverged in round " +
                        std::to_string(round) + ": " + what),
        round_(round),
        client_id_(client_id) {}

  std::size_t round() const noexcept { return round_; }
  std::size_t client_id() const noexcept { return client_id_; }

 private:
  std::size_t round_;
  std::size_t client_id_;
};

class DivergedPolicyError : public DivergenceError {
 public:
  using DivergenceError::DivergenceError;
};

/// Checkpoint or artifact could not be written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dqfl
