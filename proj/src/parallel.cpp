#include "skywatch/parallel.hpp"

#include <cstdlib>
#include <string>

namespace skywatch {

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("SKYWATCH_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (const std::exception&) {
        }
    }
    return 1;
}

}  // namespace skywatch
