from setuptools import setup, find_packages
import selfsim


with open('README.md', 'r') as fh:
    long_description = fh.read()

setup(
    name='selfsim',
    packages=find_packages(exclude=['tests']),
    version=selfsim.__version__,
    license='MIT',
    description='Exact and automodel solutions of Lévy-flight transport on a line, with the accuracy boundary '
                'between them.',
    long_description=long_description,
    long_description_content_type='text/markdown',
    python_requires='>=3.8',
    install_requires=[
        'numpy>=1.21',
        'scipy>=1.8',
        'appdirs>=1.4.3',
    ],
    extras_require={
        'test': ['pytest>=7'],
    },
    entry_points={
        'console_scripts': [
            'selfsim=selfsim.__main__:main',
        ],
    },
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Environment :: Console',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3 :: Only',
        'Topic :: Scientific/Engineering :: Physics',
    ],
)
