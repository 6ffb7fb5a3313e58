use std::process::ExitCode;

fn main() -> ExitCode {
    let threads = std::env::var("ELASTORAY_THREADS").ok();
    match elastoray::cli::thread_count(threads.as_deref()) {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("elastoray: error [threads]: {e}");
                return ExitCode::from(2);
            }
        }
        Ok(None) => {}
        Err(msg) => {
            eprintln!("elastoray: error [usage]: {msg}");
            return ExitCode::from(1);
        }
    }
    ExitCode::from(elastoray::cli::dispatch(std::env::args_os()) as u8)
}
