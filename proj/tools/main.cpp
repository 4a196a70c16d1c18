#include <iostream>

#include "app/app.hpp"

int main(int argc, char** argv) {
  return quicksilver::app::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
