#pragma once

#include <stdexcept>
#include <string>

namespace ctqe {

// Error taxonomy maps onto CLI exit codes: usage=1, data=2, provider=3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UsageError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct ProviderError : Error {
    using Error::Error;
};

} // namespace ctqe
