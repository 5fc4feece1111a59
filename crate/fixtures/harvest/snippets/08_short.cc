#include <vector>
int main() {
    std::vector<double> a(8, 1.0);
    double s = 0;
    for (double x : a) { s += x; }
    return s == 8.0 ? 0 : 1;
}
