fn main() {
    std::process::exit(lidar_meta::cli::run(std::env::args_os()));
}
