#include "nldf/autodiff.hpp"

#include <atomic>

namespace nldf::nn {

namespace {
std::atomic<bool> g_check_finite{false};
}

void set_check_finite(bool enabled) { g_check_finite.store(enabled, std::memory_order_relaxed); }
bool check_finite_enabled() { return g_check_finite.load(std::memory_order_relaxed); }

}  // namespace nldf::nn
