std::cin >> n;
std::cout << "result: "
          << n * 2 << std::endl;
printf("%d\n", n);
