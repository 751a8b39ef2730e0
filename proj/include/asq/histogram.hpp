#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <vector>

#include "asq/numeric.hpp"

namespace asq {

/// Frequency table over sampled indices; fixed-size open addressing with linear probing.
class SampleHistogram {
public:
    SampleHistogram() = default;

    explicit SampleHistogram(std::span<const IndexCount> counts) {
        const std::size_t cap = std::bit_ceil(std::max<std::size_t>(8, 2 * counts.size()));
        keys_.assign(cap, kEmpty);
        vals_.assign(cap, 0);
        mask_ = cap - 1;
        for (const auto &c : counts) {
            std::size_t s = slot(c.index);
            while (keys_[s] != kEmpty && keys_[s] != c.index) s = (s + 1) & mask_;
            keys_[s] = c.index;
            vals_[s] += c.count;
            total_ += c.count;
        }
        distinct_ = 0;
        for (auto k : keys_) distinct_ += k != kEmpty;
    }

    std::uint64_t count(std::uint64_t index) const {
        if (keys_.empty()) return 0;
        for (std::size_t s = slot(index);; s = (s + 1) & mask_) {
            if (keys_[s] == index) return vals_[s];
            if (keys_[s] == kEmpty) return 0;
        }
    }

    double frequency(std::uint64_t index) const {
        return total_ == 0 ? 0.0 : static_cast<double>(count(index)) / static_cast<double>(total_);
    }

    std::uint64_t total() const noexcept { return total_; }
    std::size_t distinct() const noexcept { return distinct_; }

private:
    static constexpr std::uint64_t kEmpty = ~std::uint64_t{0};

    std::size_t slot(std::uint64_t key) const { return static_cast<std::size_t>(splitmix64(key)) & mask_; }

    std::vector<std::uint64_t> keys_;
    std::vector<std::uint64_t> vals_;
    std::size_t mask_ = 0;
    std::uint64_t total_ = 0;
    std::size_t distinct_ = 0;
};

}  // namespace asq
