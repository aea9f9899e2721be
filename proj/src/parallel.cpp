#include "mcc/parallel.hpp"

#include <atomic>

namespace mcc {

namespace {
std::atomic<int> g_num_threads{0};
}

void set_num_threads(int n) { g_num_threads.store(n < 0 ? 0 : n); }

int num_threads() { return g_num_threads.load(); }

}  // namespace mcc
