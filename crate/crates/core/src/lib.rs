//! Selmer rank statistics for elliptic curves twisted over fans of
//! S₃-cubic extensions, with the supporting finite geometry over F₃.

pub mod cache;
pub mod cli;
pub mod curve;
pub mod f3;
pub mod fans;
pub mod ff;
pub mod gl2f3;
pub mod markov;

/// Runs the guide's snippets as doctests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/intro.md")]
    struct Intro;
    #[doc = include_str!("../../../book/src/finite-geometry.md")]
    struct FiniteGeometry;
    #[doc = include_str!("../../../book/src/gl2f3.md")]
    struct Gl2f3;
    #[doc = include_str!("../../../book/src/curves.md")]
    struct Curves;
    #[doc = include_str!("../../../book/src/markov.md")]
    struct Markov;
    #[doc = include_str!("../../../book/src/fans.md")]
    struct Fans;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
