#pragma once

#include <string>

namespace autoquery {

// Directory holding the bundled data files (desk dataset, prompt pool, schema
// and synonym tables). Honors the AUTOQUERY_DATA_DIR environment variable,
// falling back to the build-time location.
std::string default_data_dir();

}  // namespace autoquery
