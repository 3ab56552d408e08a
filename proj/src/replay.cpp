#include "sdrl/replay.hpp"

#include "sdrl/errors.hpp"

namespace sdrl::rl {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay buffer: capacity must be positive");
    data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
    if (data_.size() < capacity_) {
        data_.push_back(std::move(t));
    } else {
        data_[next_] = std::move(t);
        next_ = (next_ + 1) % capacity_;
    }
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, RandomStream& rng) const {
    if (size() < batch)
        throw UsageError("replay buffer: cannot sample " + std::to_string(batch) +
                         " from size " + std::to_string(size()));
    std::vector<std::size_t> idx(batch);
    for (std::size_t i = 0; i < batch; ++i)
        idx[i] = static_cast<std::size_t>(rng.uniform_int(size()));
    return idx;
}

void ReplayBuffer::restore(std::vector<Transition> data, std::size_t next) {
    if (data.size() > capacity_ || (data.size() == capacity_ && next >= capacity_) ||
        (data.size() < capacity_ && next != 0))
        throw UsageError("replay buffer: inconsistent restore state");
    data_ = std::move(data);
    next_ = next;
}

}  // namespace sdrl::rl
