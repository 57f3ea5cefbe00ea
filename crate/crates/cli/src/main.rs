fn main() {
    println!("np-spectra scaffold");
}
