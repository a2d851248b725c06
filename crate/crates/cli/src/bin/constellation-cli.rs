use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::Parser;
use constellation_cli::{parse_repl_line, render_reply, result_table, tasks_table, Format, ReplCommand, REPL_HELP};
use constellation_core::client::Connection;
use constellation_core::cluster::ClientReply;
use constellation_core::privacy::Keystore;
use rustyline::error::ReadlineError;
use rustyline::DefaultEditor;

/// Interactive CQL client. With `--exec` it runs the given statements and
/// exits nonzero if any of them failed.
#[derive(Parser)]
#[command(name = "constellation-cli", version)]
struct Args {
    /// Node to connect to at startup.
    #[arg(long)]
    connect: Option<String>,
    #[arg(long, default_value = "cli")]
    client: String,
    /// Shared key directory; the client key is created on first use.
    #[arg(long, default_value = "keystore")]
    keystore: PathBuf,
    /// Statement to run instead of the REPL. Repeatable.
    #[arg(long)]
    exec: Vec<String>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// After `--exec`, keep printing pushed periodic results for this long.
    #[arg(long, default_value_t = 0)]
    wait_ms: u64,
    #[arg(long)]
    history: Option<PathBuf>,
}

struct Session {
    keystore: Keystore,
    client: String,
    format: Format,
    conn: Option<Connection>,
}

impl Session {
    fn connect(&mut self, addr: &str) -> Result<(), String> {
        if let Some(mut old) = self.conn.take() {
            old.close();
        }
        let key = self.keystore.load_or_generate(&self.client).map_err(|e| e.to_string())?;
        let conn = Connection::connect(addr, &self.client, key).map_err(|e| e.to_string())?;
        println!("connected to {} at {}", conn.node_id(), conn.node_address());
        self.conn = Some(conn);
        Ok(())
    }

    fn conn(&mut self) -> Result<&mut Connection, String> {
        self.conn.as_mut().ok_or_else(|| "not connected; use \\connect host:port".to_string())
    }

    /// Returns false when the statement was rejected.
    fn statement(&mut self, text: &str) -> Result<bool, String> {
        let format = self.format;
        let reply = self.conn()?.query(text).map_err(|e| e.to_string())?;
        print!("{}", render_reply(&reply, format));
        Ok(!matches!(reply, ClientReply::Error(_)))
    }

    fn drain_results(&mut self, wait: Duration) {
        let format = self.format;
        let Some(conn) = self.conn.as_ref() else { return };
        let end = Instant::now() + wait;
        for r in conn.try_results() {
            print!("{}", result_table(&r).render(format));
        }
        while let Some(left) = end.checked_duration_since(Instant::now()) {
            match conn.next_result(left) {
                Some(r) => print!("{}", result_table(&r).render(format)),
                None => break,
            }
        }
    }

    fn command(&mut self, cmd: ReplCommand) -> Result<bool, String> {
        match cmd {
            ReplCommand::Empty => {}
            ReplCommand::Connect(addr) => self.connect(&addr)?,
            ReplCommand::Close => {
                let mut conn = self.conn.take().ok_or("not connected")?;
                let cancelled = conn.close();
                println!("closed; {cancelled} task(s) cancelled");
            }
            ReplCommand::Tasks => {
                let format = self.format;
                let tasks = self.conn()?.tasks().map_err(|e| e.to_string())?;
                print!("{}", tasks_table(&tasks).render(format));
            }
            ReplCommand::Results => self.drain_results(Duration::ZERO),
            ReplCommand::Help => println!("{REPL_HELP}"),
            ReplCommand::Quit => return Ok(false),
            ReplCommand::Statement(text) => {
                self.statement(&text)?;
            }
        }
        Ok(true)
    }
}

fn default_history() -> PathBuf {
    std::env::var_os("HOME")
        .map(PathBuf::from)
        .unwrap_or_default()
        .join(".constellation_history")
}

fn repl(session: &mut Session, history: PathBuf) -> ExitCode {
    let mut rl = match DefaultEditor::new() {
        Ok(rl) => rl,
        Err(e) => {
            eprintln!("cannot start line editor: {e}");
            return ExitCode::FAILURE;
        }
    };
    let _ = rl.load_history(&history);
    loop {
        session.drain_results(Duration::ZERO);
        let prompt = match &session.conn {
            Some(c) => format!("{}> ", c.node_id()),
            None => "cql> ".to_string(),
        };
        let line = match rl.readline(&prompt) {
            Ok(l) => l,
            Err(ReadlineError::Interrupted) => continue,
            Err(ReadlineError::Eof) => break,
            Err(e) => {
                eprintln!("{e}");
                break;
            }
        };
        if !line.trim().is_empty() {
            let _ = rl.add_history_entry(line.as_str());
        }
        match parse_repl_line(&line).and_then(|c| session.command(c)) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => eprintln!("{e}"),
        }
    }
    if let Err(e) = rl.save_history(&history) {
        eprintln!("cannot save history to {}: {e}", history.display());
    }
    if let Some(mut c) = session.conn.take() {
        c.close();
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let keystore = match Keystore::open(&args.keystore) {
        Ok(k) => k,
        Err(e) => {
            eprintln!("keystore {}: {e}", args.keystore.display());
            return ExitCode::from(2);
        }
    };
    let mut session = Session {
        keystore,
        client: args.client,
        format: args.format,
        conn: None,
    };
    if let Some(addr) = &args.connect {
        if let Err(e) = session.connect(addr) {
            eprintln!("{e}");
            return ExitCode::FAILURE;
        }
    }
    if args.exec.is_empty() {
        return repl(&mut session, args.history.unwrap_or_else(default_history));
    }
    let mut ok = true;
    for text in &args.exec {
        match session.statement(text) {
            Ok(accepted) => ok &= accepted,
            Err(e) => {
                eprintln!("{e}");
                ok = false;
            }
        }
    }
    session.drain_results(Duration::from_millis(args.wait_ms));
    if let Some(mut c) = session.conn.take() {
        c.close();
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
