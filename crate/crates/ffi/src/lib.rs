pub use deltadex;
