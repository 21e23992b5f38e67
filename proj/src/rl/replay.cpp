#include "lanemerge/rl/replay.hpp"

#include <stdexcept>

namespace lanemerge::rl {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("replay capacity must be positive");
    data_.reserve(capacity_);
}

void ReplayBuffer::push(const ExperienceTransition& t) {
    if (t.action < 0 || t.action >= 5) throw std::invalid_argument("transition action index out of range");
    if (data_.size() < capacity_) {
        data_.push_back(t);
    } else {
        data_[next_] = t;
    }
    next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, std::mt19937_64& rng) const {
    if (data_.empty()) throw std::logic_error("cannot sample an empty replay buffer");
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) i = pick(rng);
    return idx;
}

std::vector<ExperienceTransition> ReplayBuffer::sample(std::size_t batch, std::mt19937_64& rng) const {
    std::vector<ExperienceTransition> out;
    out.reserve(batch);
    for (auto i : sample_indices(batch, rng)) out.push_back(data_[i]);
    return out;
}

}  // namespace lanemerge::rl
