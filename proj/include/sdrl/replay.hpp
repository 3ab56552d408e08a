#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "sdrl/rng.hpp"

namespace sdrl::rl {

/// One off-policy learning sample. Observations are stored flattened and
/// normalized, restricted to the owning agent's sensor set.
struct Transition {
    std::vector<double> s;
    std::array<double, 2> a{0.0, 0.0};
    double r = 0.0;
    std::vector<double> s2;
    bool done = false;
};

/// FIFO ring buffer with uniform sampling (with replacement).
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(Transition t);
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const { return data_[i]; }

    /// Uniform indices; requires size() >= batch.
    std::vector<std::size_t> sample_indices(std::size_t batch, RandomStream& rng) const;

    // flat access for checkpointing
    const std::vector<Transition>& raw() const { return data_; }
    std::size_t write_pos() const { return next_; }
    void restore(std::vector<Transition> data, std::size_t next);

private:
    std::size_t capacity_;
    std::size_t next_ = 0;  // overwrite cursor once full
    std::vector<Transition> data_;
};

}  // namespace sdrl::rl
