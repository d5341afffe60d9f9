#include "turbstoch/hash.hpp"

#include <openssl/evp.h>

#include <stdexcept>

namespace turbstoch {

Sha256Digest sha256(const void* data, size_t len) {
    Sha256Digest out{};
    unsigned int outlen = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, data, len) != 1 ||
        EVP_DigestFinal_ex(ctx, out.data(), &outlen) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("sha256 failure");
    }
    EVP_MD_CTX_free(ctx);
    return out;
}

Sha256Digest sha256(const std::string& s) { return sha256(s.data(), s.size()); }

std::string hex_digest(const Sha256Digest& d) {
    static const char* hex = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (uint8_t b : d) {
        s.push_back(hex[b >> 4]);
        s.push_back(hex[b & 0xf]);
    }
    return s;
}

}  // namespace turbstoch
