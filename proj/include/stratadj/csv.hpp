#pragma once

#include <istream>
#include <string>
#include <vector>

#include "stratadj/core.hpp"

namespace stratadj {

// Input schema: header `stratum,z,y,x1,...,xK`, comma-delimited, no missing
// cells. Errors carry ErrorKind::ParseError and name the offending line.
std::vector<RawRow> read_csv_rows(std::istream& in);

std::vector<RawRow> read_csv_file(const std::string& path);

/// Parse + validate in one step.
ObservedDataset load_dataset(const std::string& path);

}  // namespace stratadj
