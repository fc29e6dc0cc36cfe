#include <autoquery/data_paths.hpp>

#include <cstdlib>

namespace autoquery {

std::string default_data_dir() {
    if (const char* env = std::getenv("AUTOQUERY_DATA_DIR"); env && *env) return env;
#ifdef AUTOQUERY_DEFAULT_DATA_DIR
    return AUTOQUERY_DEFAULT_DATA_DIR;
#else
    return "data";
#endif
}

}  // namespace autoquery
