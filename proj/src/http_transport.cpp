#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "geosent/error.hpp"
#include "geosent/geo.hpp"

namespace geosent {

namespace {

class HttplibTransport final : public HttpTransport {
 public:
  HttpResponse get(const std::string& base, const std::string& target) override {
    httplib::Client client(base);
    client.set_connection_timeout(10);
    client.set_read_timeout(30);
    client.set_follow_location(true);
    auto res = client.Get(target);
    if (!res) {
      // Transport failures surface as status 0 so the retry loop treats them uniformly.
      return {0, httplib::to_string(res.error())};
    }
    return {res->status, res->body};
  }
};

}  // namespace

std::unique_ptr<HttpTransport> make_http_transport() { return std::make_unique<HttplibTransport>(); }

}  // namespace geosent
