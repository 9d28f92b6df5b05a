#include "rawnet/nn/fault.hpp"

#include <atomic>

namespace rawnet::nn {

namespace {
std::atomic<BackwardFault> g_fault{BackwardFault::none};
}

void set_backward_fault(BackwardFault f) noexcept { g_fault.store(f, std::memory_order_relaxed); }

BackwardFault backward_fault() noexcept { return g_fault.load(std::memory_order_relaxed); }

}  // namespace rawnet::nn
