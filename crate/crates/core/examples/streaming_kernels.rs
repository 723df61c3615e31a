//! Stream an image through the line-buffered convolution and Canny kernels
//! and compare each against its whole-image reference.

use overlay_sim::kernels::{
    canny_reference, conv2d_reference, image_tokens, latency_of, make_streaming, stream_image, KernelError,
    KernelKind, KernelParams, PixelImage,
};

fn main() -> Result<(), KernelError> {
    let img = PixelImage::from_fn(64, 48, |r, c| if (r / 12 + c / 16) % 2 == 0 { 40 } else { 200 });

    let conv = KernelParams::for_kind(KernelKind::Conv);
    let blurred = stream_image(KernelKind::Conv, conv.clone(), &img)?;
    let golden = conv2d_reference(&img, &conv.conv)?;
    println!("conv:  streamed == reference: {}", blurred == golden.samples());

    let canny = KernelParams::for_kind(KernelKind::Canny);
    let blurred = PixelImage::new(64, 48, blurred)?;
    let edges = stream_image(KernelKind::Canny, canny.clone(), &blurred)?;
    let golden = canny_reference(&blurred, canny.threshold)?;
    println!("canny: streamed == reference: {} ({} edge pixels)", edges == golden.values(), golden.edge_count());

    for kind in [KernelKind::Conv, KernelKind::Canny] {
        let mut k = make_streaming(kind, KernelParams::for_kind(kind));
        k.begin_frame(64, 48)?;
        let (_, cycles) = k.run_isolated(&image_tokens(&img))?;
        println!(
            "{:<6} latency {} (model {}), frame took {cycles} cycles for {} pixels",
            kind.name(),
            k.observed_latency().unwrap_or(0),
            latency_of(kind, 64)?,
            img.len()
        );
    }
    println!("at 1024 wide: conv latency {}, canny latency {}", latency_of(KernelKind::Conv, 1024)?, latency_of(KernelKind::Canny, 1024)?);
    Ok(())
}
