#pragma once

#include <cstdint>

namespace splitpu {

/// Independent RNG streams derived from one run seed.
enum class SeedStream : std::uint64_t {
    DatasetTrain = 1,
    DatasetTest = 2,
    PuSplit = 3,
    BaseInit = 10,
    BaseShuffle = 11,
    BaseAugment = 12,
    TempInit = 20,
    TempShuffle = 21,
    TempAugment = 22,
    Temp = 23,
    StudentInit = 30,
    StudentShuffle = 31,
    StudentWeak = 32,
    StudentStrong = 33,
    HeadInit = 34,
    Student = 35,
};

/// splitmix64 finalizer over (seed, stream[, index]).
constexpr std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream, std::uint64_t index = 0) {
    std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(stream) * 0xBF58476D1CE4E5B9ULL +
                      index * 0x94D049BB133111EBULL + 0x632BE59BD9B4E019ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace splitpu
