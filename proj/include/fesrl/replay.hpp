#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "fesrl/env.hpp"

namespace fesrl::rl {

/// Column-major minibatch: one tuple per column.
struct Batch {
  Eigen::MatrixXd s;       // obs_dim x B
  Eigen::MatrixXd a;       // n_actions x B
  Eigen::VectorXd r;       // B
  Eigen::MatrixXd s_next;  // obs_dim x B

  Eigen::Index size() const { return r.size(); }
};

/// Fixed-capacity ring buffer of experience tuples stored as flat rows.
class ReplayBuffer {
 public:
  ReplayBuffer(int obs_dim, int n_actions, std::size_t capacity = 1'000'000);

  int obs_dim() const { return obs_dim_; }
  int n_actions() const { return n_actions_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  std::uint64_t insertions() const { return insertions_; }

  /// Throws ShapeMismatchError.
  void push(const env::ExperienceTuple& t);

  /// Tuples in insertion order, oldest first.
  env::ExperienceTuple at(std::size_t i) const;
  std::vector<env::ExperienceTuple> contents() const;

  /// Uniform with replacement over current contents (storage slots).
  std::vector<std::size_t> sample_indices(std::mt19937_64& rng, std::size_t batch) const;
  Batch gather(const std::vector<std::size_t>& slots) const;
  Batch sample(std::mt19937_64& rng, std::size_t batch) const;
  /// Every stored tuple, in storage order.
  Batch all() const;

 private:
  std::size_t row_width() const { return 2 * static_cast<std::size_t>(obs_dim_) + n_actions_ + 1; }
  std::size_t slot_of(std::size_t i) const;

  int obs_dim_;
  int n_actions_;
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t next_ = 0;
  std::uint64_t insertions_ = 0;
  std::vector<double> rows_;
};

}  // namespace fesrl::rl
