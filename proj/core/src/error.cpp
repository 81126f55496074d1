#include "autokg/error.hpp"

namespace autokg {
// Out-of-line anchor so the exception hierarchy has a home translation unit.
}  // namespace autokg
