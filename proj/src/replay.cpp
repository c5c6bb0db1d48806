#include "fesrl/replay.hpp"

#include <numeric>

#include "fesrl/error.hpp"

namespace fesrl::rl {

ReplayBuffer::ReplayBuffer(int obs_dim, int n_actions, std::size_t capacity)
    : obs_dim_(obs_dim), n_actions_(n_actions), capacity_(capacity) {
  if (obs_dim <= 0 || n_actions <= 0 || capacity == 0) throw InvalidArgumentError("replay buffer dimensions must be positive");
}

void ReplayBuffer::push(const env::ExperienceTuple& t) {
  if (t.s.size() != static_cast<std::size_t>(obs_dim_) || t.s_next.size() != static_cast<std::size_t>(obs_dim_) ||
      t.a.size() != static_cast<std::size_t>(n_actions_))
    throw ShapeMismatchError("experience tuple does not match buffer dimensions");
  const std::size_t w = row_width();
  if (size_ < capacity_) rows_.resize((size_ + 1) * w);
  double* row = rows_.data() + next_ * w;
  for (double x : t.s.to_vector()) *row++ = x;
  for (double x : t.a) *row++ = x;
  *row++ = t.r;
  for (double x : t.s_next.to_vector()) *row++ = x;

  next_ = (next_ + 1) % capacity_;
  if (size_ < capacity_) ++size_;
  ++insertions_;
}

std::size_t ReplayBuffer::slot_of(std::size_t i) const {
  if (i >= size_) throw InvalidArgumentError("replay index out of range");
  // Once full, the oldest tuple sits at next_.
  return size_ < capacity_ ? i : (next_ + i) % capacity_;
}

env::ExperienceTuple ReplayBuffer::at(std::size_t i) const {
  const double* row = rows_.data() + slot_of(i) * row_width();
  auto read_obs = [&](const double*& p) {
    env::Observation o;
    o.sin_theta = *p++;
    o.cos_theta = *p++;
    o.cadence = *p++;
    o.prev_action.assign(p, p + (obs_dim_ - 3));
    p += obs_dim_ - 3;
    return o;
  };
  env::ExperienceTuple t;
  t.s = read_obs(row);
  t.a.assign(row, row + n_actions_);
  row += n_actions_;
  t.r = *row++;
  t.s_next = read_obs(row);
  return t;
}

std::vector<env::ExperienceTuple> ReplayBuffer::contents() const {
  std::vector<env::ExperienceTuple> out;
  out.reserve(size_);
  for (std::size_t i = 0; i < size_; ++i) out.push_back(at(i));
  return out;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::mt19937_64& rng, std::size_t batch) const {
  if (size_ == 0) throw InsufficientDataError("cannot sample from an empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<std::size_t> idx(batch);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

Batch ReplayBuffer::gather(const std::vector<std::size_t>& slots) const {
  const auto b = static_cast<Eigen::Index>(slots.size());
  Batch out{Eigen::MatrixXd(obs_dim_, b), Eigen::MatrixXd(n_actions_, b), Eigen::VectorXd(b),
            Eigen::MatrixXd(obs_dim_, b)};
  const std::size_t w = row_width();
  for (Eigen::Index j = 0; j < b; ++j) {
    const double* row = rows_.data() + slots[static_cast<std::size_t>(j)] * w;
    for (int k = 0; k < obs_dim_; ++k) out.s(k, j) = *row++;
    for (int k = 0; k < n_actions_; ++k) out.a(k, j) = *row++;
    out.r(j) = *row++;
    for (int k = 0; k < obs_dim_; ++k) out.s_next(k, j) = *row++;
  }
  return out;
}

Batch ReplayBuffer::sample(std::mt19937_64& rng, std::size_t batch) const { return gather(sample_indices(rng, batch)); }

Batch ReplayBuffer::all() const {
  std::vector<std::size_t> slots(size_);
  std::iota(slots.begin(), slots.end(), 0);
  return gather(slots);
}

}  // namespace fesrl::rl
