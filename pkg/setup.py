from setuptools import find_packages, setup

setup(
    name="rsvq-codec",
    packages=find_packages(),
    version="0.1.0",
    description="A streamable MDCT neural audio codec with residual scalar-vector quantization",
    author="DTU",
    license="MIT",
    entry_points={
        "console_scripts": ["rsvq-codec=src.models.codec_command_line:run"],
    },
)
