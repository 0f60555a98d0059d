// Reference server for the bridge protocol: serves an analytic Gaussian
// posterior mean, an echo, or deliberately malformed replies.
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "viewx/bridge.hpp"
#include "viewx/oracle.hpp"

int main(int argc, char** argv) {
  CLI::App app{"viewx-mock-server: bridge protocol mock backend"};
  std::string addr = "127.0.0.1:0";
  std::string mode = "gaussian";
  double mean = 0.0, scale = 1.0;
  bool once = false;
  app.add_option("--addr", addr, "listen address host:port (port 0 picks a free port)");
  app.add_option("--mock", mode, "gaussian | echo | wrong-shape")
      ->check(CLI::IsMember({"gaussian", "echo", "wrong-shape"}));
  app.add_option("--mean", mean, "Gaussian prior mean");
  app.add_option("--scale", scale, "Gaussian prior scale");
  app.add_flag("--exit-on-shutdown", once, "exit after the first session that sends SHUTDOWN");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto colon = addr.rfind(':');
    const std::string host = addr.substr(0, colon);
    const auto port = static_cast<std::uint16_t>(std::stoi(addr.substr(colon + 1)));
    viewx::GaussianPrior prior;
    prior.mean_scalar = mean;
    prior.scale = scale;
    prior.validate();

    viewx::bridge::Session::PredictFn fn;
    if (mode == "gaussian") {
      fn = [prior](const viewx::Tensor& x, float sigma, const viewx::bridge::Bytes&) {
        return viewx::gaussian_posterior_mean(x, sigma, prior);
      };
    } else if (mode == "echo") {
      fn = [](const viewx::Tensor& x, float, const viewx::bridge::Bytes&) { return x; };
    } else {
      fn = [](const viewx::Tensor& x, float, const viewx::bridge::Bytes&) {
        return viewx::Tensor({static_cast<std::uint32_t>(x.size() + 1)}, 0.0f);
      };
    }
    const nlohmann::json meta{{"server", "viewx-mock-server"}, {"mode", mode}};
    viewx::bridge::MockServer server([&] { return viewx::bridge::Session(fn, meta); }, host, port, once);
    std::cout << "listening on " << server.address().str() << std::endl;
    server.serve();
  } catch (const viewx::Error& e) {
    std::cerr << "viewx-mock-server: " << e.what() << "\n";
    return viewx::exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "viewx-mock-server: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
