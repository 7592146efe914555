#pragma once

#include <cstddef>
#include <functional>

namespace agedetect {

/// Caps worker threads used by parallel_for. 0 restores the default
/// (hardware concurrency).
void set_max_jobs(std::size_t jobs);
std::size_t max_jobs();

/// Runs fn(i) for i in [0, n). Each index must write only to its own output
/// slot so results do not depend on scheduling. Nested calls run serially on
/// the calling worker. If any call throws, the exception from the lowest
/// failing index is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace agedetect
