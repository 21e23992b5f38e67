#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "lanemerge/rl/state_encoder.hpp"

namespace lanemerge::rl {

struct ExperienceTransition {
    StateVector state{};
    int action = 0;
    double reward = 0.0;
    StateVector next_state{};
    bool done = false;
};

/// Fixed-capacity ring buffer; the oldest transition is overwritten once full.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(const ExperienceTransition& t);
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] std::size_t capacity() const { return capacity_; }
    [[nodiscard]] const ExperienceTransition& at(std::size_t i) const { return data_.at(i); }

    /// Uniform sample with replacement of stored indices.
    [[nodiscard]] std::vector<std::size_t> sample_indices(std::size_t batch, std::mt19937_64& rng) const;
    [[nodiscard]] std::vector<ExperienceTransition> sample(std::size_t batch, std::mt19937_64& rng) const;

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<ExperienceTransition> data_;
};

}  // namespace lanemerge::rl
