//! Pipe-protocol decoder for `.mrv` files.

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let code = mangaroll::media::rawvideo::pipe_decoder_main(
        &args,
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    );
    std::process::exit(code);
}
