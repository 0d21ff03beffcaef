#ifndef RDB_PARALLEL_HPP_
#define RDB_PARALLEL_HPP_

#include <cstddef>
#include <functional>

namespace rdb {

// Worker cap: RDB_THREADS if set and positive, else hardware concurrency.
int worker_count();

// Runs fn(i) for i in [0, n). Each index is handled exactly once; callers
// write results into index-addressed slots so output order never depends on
// scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace rdb

#endif  // RDB_PARALLEL_HPP_
