use std::io::Write;
use std::net::SocketAddr;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use kq_cli::commands::{self, Cli, Command, ServeArgs};
use kq_cli::service::{router, AppState};
use tower_http::services::ServeDir;
use tracing::info;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    let out = match &cli.command {
        Command::Check(a) => commands::check(a)?,
        Command::Bisim(a) => commands::bisim(a)?,
        Command::Charform(a) => commands::charform(a)?,
        Command::Distinguish(a) => commands::distinguish(a)?,
        Command::Product(a) => commands::product(a)?,
        Command::Verify(a) => commands::verify(a)?,
        Command::Serve(a) => {
            serve(a)?;
            return Ok(0);
        }
    };
    std::io::stdout().write_all(out.text.as_bytes())?;
    Ok(out.code)
}

fn serve(a: &ServeArgs) -> Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let state = AppState::new(a.state_dir.clone());
        let restored = state.load_snapshots()?;
        if restored > 0 {
            info!("restored {restored} sessions");
        }
        let mut app = router(state);
        if let Some(dir) = &a.static_dir {
            app = app.fallback_service(ServeDir::new(dir));
        }
        let addr = SocketAddr::from(([0, 0, 0, 0], a.port));
        let listener = tokio::net::TcpListener::bind(addr).await?;
        info!("listening on {addr}");
        axum::serve(listener, app).await?;
        Ok(())
    })
}
